//! Versioned report envelope shared by pipelines and the CLI.

use serde::Serialize;
use serde_json::Value;

use crate::error::Result;

pub const SCHEMA_VERSION: u32 = 1;

/// One named verdict: `value` compared against `limit`.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub relation: &'static str,
    pub pass: bool,
}

impl Check {
    pub fn le(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Check { name: name.into(), value, limit, relation: "<=", pass: value <= limit }
    }

    pub fn ge(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Check { name: name.into(), value, limit, relation: ">=", pass: value >= limit }
    }

    pub fn eq(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Check { name: name.into(), value, limit, relation: "==", pass: value == limit }
    }

    pub fn flag(name: impl Into<String>, ok: bool) -> Self {
        let v = if ok { 1.0 } else { 0.0 };
        Check { name: name.into(), value: v, limit: 1.0, relation: "==", pass: ok }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub values: Value,
}

impl Report {
    pub fn new(command: impl Into<String>, seed: u64, values: &impl Serialize, checks: Vec<Check>) -> Result<Self> {
        Ok(Report {
            schema_version: SCHEMA_VERSION,
            command: command.into(),
            seed,
            pass: checks.iter().all(|c| c.pass),
            checks,
            values: serde_json::to_value(values)?,
        })
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn failed(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// Sweep row with the fixed column set `p,M,value,ratio,leftover,seed`.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub p: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub value: f64,
    pub ratio: f64,
    pub leftover: f64,
    pub seed: u64,
}

pub const CSV_HEADER: &str = "p,M,value,ratio,leftover,seed";

pub fn to_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!("{:?},{:?},{:?},{:?},{:?},{}\n", r.p, r.m, r.value, r.ratio, r.leftover, r.seed));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_aggregation() {
        let r = Report::new("x", 0, &serde_json::json!({}), vec![Check::le("a", 1.0, 2.0), Check::ge("b", 1.0, 2.0)]).unwrap();
        assert!(!r.pass);
        assert_eq!(r.failed().count(), 1);
        let r = Report::new("x", 0, &serde_json::json!({}), vec![Check::flag("a", true)]).unwrap();
        assert!(r.pass);
    }

    #[test]
    fn csv_header_and_round_trip() {
        let rows = [SweepRow { p: 2.0, m: 4.0, value: 0.1, ratio: 0.025, leftover: 1e-3, seed: 0 }];
        let csv = to_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        let f: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(f[2].parse::<f64>().unwrap(), 0.1);
    }
}

use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn cexlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cexlab")).args(args).env_remove("CEXLAB_LOG").output().expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cexlab-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("report JSON on stdout")
}

#[test]
fn seeded_runs_are_byte_identical() {
    let a = cexlab(&["verify", "appendix", "--section", "walks", "--seed", "7"]);
    let b = cexlab(&["verify", "appendix", "--section", "walks", "--seed", "7"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let v = json(&a);
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["seed"], 7);
    let c = cexlab(&["verify", "appendix", "--section", "walks", "--seed", "8"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn usage_errors_exit_two() {
    let out = cexlab(&["pipeline", "hilbert", "--M", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("must exceed 2"));
    let out = cexlab(&["build", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(cexlab(&["transform", "remodel", "--M", "4"]).status.code(), Some(2));
}

#[test]
fn sweep_writes_fixed_csv_columns() {
    let csv = scratch("sweep.csv");
    let out = cexlab(&["sweep", "--pipeline", "hilbert", "--p", "2", "--M", "4,8", "--csv", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "p,M,value,ratio,leftover,seed");
    assert_eq!(lines.len(), 3);
    let m: Vec<f64> = lines[1..].iter().map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(m, vec![4.0, 8.0]);
    let v = json(&out);
    assert_eq!(v["values"].as_array().unwrap().len(), 2);
}

#[test]
fn built_tree_measures_like_the_report() {
    let tree = scratch("quad.json");
    let report = scratch("build.json");
    let out = cexlab(&["build", "--M", "8", "--tree-out", tree.to_str().unwrap(), "--json", report.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let built: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let measured = json(&cexlab(&["measure", "--input", tree.to_str().unwrap(), "--p", "2"]));
    assert_eq!(built["values"]["ap"]["value"], measured["values"]["ap_dyadic"]["value"]);
    let again = cexlab(&["report", "--input", report.to_str().unwrap()]);
    assert_eq!(again.status.code(), Some(0));
}

#[test]
fn failed_verdict_exits_one() {
    let path = scratch("failed.json");
    let body = r#"{"schema_version":1,"command":"x","seed":0,"pass":false,
        "checks":[{"name":"a","value":2.0,"limit":1.0,"relation":"<=","pass":false}],"values":{}}"#;
    std::fs::write(&path, body).unwrap();
    let out = cexlab(&["report", "--input", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("check failed: a"));
    let tampered = body.replace("\"pass\":false,\n", "\"pass\":true,\n");
    std::fs::write(&path, tampered).unwrap();
    assert_eq!(cexlab(&["report", "--input", path.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn transforms_pass_their_checks() {
    let out = cexlab(&["transform", "small-step", "--M", "4", "--d", "4", "--walk", "generic"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = cexlab(&["transform", "small-step", "--M", "4", "--variant", "shift", "--d", "4", "--walk", "triangle"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let sched = scratch("schedule.json");
    std::fs::write(&sched, r#"{"1:0": 5, "default": 3}"#).unwrap();
    let out = cexlab(&["transform", "remodel", "--M", "4", "--steps", "2", "--schedule", sched.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&out)["values"]["config"]["steps"], 2);
}

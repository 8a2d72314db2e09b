use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use cexlab_core::appendix::*;
use cexlab_core::characteristics::{ap_dyadic_components, dyadic_smoothness, strong_dyadic_smoothness};
use cexlab_core::hilbert::verify_lemmas;
use cexlab_core::large_step::{damage_mult, large_step_report, quad_norms, LargeStepParams, Variant};
use cexlab_core::pipelines::*;
use cexlab_core::remodel::{boundary_defect, remodel_iterate, RemodelConfig, Schedule};
use cexlab_core::report::{to_csv, Check, Report, SweepRow, SCHEMA_VERSION};
use cexlab_core::small_step::{default_cap_for, small_step_report, WalkKind};
use cexlab_core::tree::{AdaptiveTree, Quad, F, G, SIGMA, W};
use log::{info, warn};
use serde_json::{json, Value};

use crate::{
    BuildArgs, Cli, Command, MeasureArgs, Pipeline, QuadArgs, Section, SweepArgs, SweepPipeline, Transform, VariantArg, Verify, WalkArg,
};

pub fn run(cli: &Cli) -> Result<bool> {
    if cli.threads == 0 {
        bail!("--threads must be at least 1");
    }
    if cli.csv.is_some() && !matches!(cli.command, Command::Sweep(_)) {
        warn!("--csv is only written by `sweep`");
    }
    let report = match &cli.command {
        Command::Build(a) => build(cli, a)?,
        Command::Transform(t) => transform(cli, t)?,
        Command::Pipeline(p) => pipeline(cli, p)?,
        Command::Measure(a) => measure(cli, a)?,
        Command::Verify(v) => verify(cli, v)?,
        Command::Sweep(a) => sweep(cli, a)?,
        Command::Report { input } => return recheck(cli, input),
    };
    emit(cli, &report)?;
    Ok(report.pass)
}

fn emit(cli: &Cli, report: &Report) -> Result<()> {
    let text = report.to_json_string()? + "\n";
    match &cli.json {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    for c in report.failed() {
        eprintln!("check failed: {} = {} (expected {} {})", c.name, c.value, c.relation, c.limit);
    }
    Ok(())
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_tree(path: Option<&Path>, tree: &AdaptiveTree) -> Result<()> {
    if let Some(path) = path {
        let v = tree.to_json()?;
        fs::write(path, serde_json::to_string(&v)? + "\n").with_context(|| format!("writing {}", path.display()))?;
        info!("tree written to {}", path.display());
    }
    Ok(())
}

fn variant(v: VariantArg) -> Variant {
    match v {
        VariantArg::Mult => Variant::Mult,
        VariantArg::Shift => Variant::Shift,
    }
}

fn load_quad(a: &QuadArgs) -> Result<Quad> {
    match &a.input {
        Some(path) => Ok(Quad::new(a.p, AdaptiveTree::from_json(&read_json(path)?)?)?),
        None => {
            let (q, _) = large_step_report(&LargeStepParams::new(a.p, a.m)?, variant(a.variant))?;
            Ok(q)
        }
    }
}

fn build(cli: &Cli, a: &BuildArgs) -> Result<Report> {
    if a.quad.input.is_some() {
        bail!("`build` constructs its own tree; --input is not accepted");
    }
    let (q, r) = large_step_report(&LargeStepParams::new(a.quad.p, a.quad.m)?, variant(a.quad.variant))?;
    write_tree(a.tree_out.as_deref(), &q.tree)?;
    let checks = vec![
        Check::flag("ap_window", r.window_ok()),
        Check::le("hyperbola_defect", r.hyperbola_defect, 1e-10),
        Check::ge("min_jensen", r.min_jensen, 1.0 - 1e-12),
        Check::flag("comb_haar_negative", r.comb_haar_negative),
    ];
    Ok(Report::new("build", cli.seed, &r, checks)?)
}

fn transform(cli: &Cli, t: &Transform) -> Result<Report> {
    match t {
        Transform::SmallStep { quad, d, walk, cap_mult, cap, tree_out } => {
            let q = load_quad(quad)?;
            let kind = match walk {
                WalkArg::Generic => WalkKind::Generic,
                WalkArg::Triangle => WalkKind::Triangle,
            };
            let cap = match (cap, cap_mult) {
                (Some(c), _) => *c,
                (None, Some(m)) => m * d * d + 16,
                (None, None) => default_cap_for(kind, *d),
            };
            let (qo, r) = small_step_report(&q, kind, *d, cap)?;
            write_tree(tree_out.as_deref(), &qo.tree)?;
            let mut checks = vec![
                Check::le("s_dyadic_out", r.s_dyadic_out, r.s_dyadic_bound + 1e-12),
                Check::le("ap_out", r.ap_out, 2f64.powf(q.p) * r.ap_in),
            ];
            match kind {
                WalkKind::Generic => checks.push(Check::le("damage_rel", (r.damage_ratio() - 1.0).abs(), 2e-3)),
                WalkKind::Triangle => {
                    checks.push(Check::eq("odd_generation_haar", r.odd_generation_haar, 0.0));
                    checks.push(Check::ge("damage_ratio", r.damage_ratio(), 0.2 - 1e-6));
                }
            }
            Ok(Report::new("transform small-step", cli.seed, &r, checks)?)
        }
        Transform::Remodel { quad, steps, schedule, default_n, chase_bits, cap, tree_out } => {
            let q = load_quad(quad)?;
            let mut sched = match schedule {
                Some(path) => Schedule::from_json(&read_json(path)?)?,
                None => Schedule::default(),
            };
            if let Some(n) = default_n {
                sched.default_n = Some(*n);
            }
            if sched.default_n.is_none() && sched.map.is_empty() {
                bail!("give --schedule or --default-N");
            }
            let mut cfg = RemodelConfig { chase_bits: *chase_bits, ..RemodelConfig::with_steps(*steps) };
            if let Some(c) = cap {
                cfg.cap = *c;
            }
            let s = remodel_iterate(&q.tree, &sched, &cfg)?;
            write_tree(tree_out.as_deref(), &s.tree)?;
            let (din, dout) = (damage_mult(&q.tree, F, G), damage_mult(&s.tree, F, G));
            let ap_in = ap_dyadic_components(&q.tree, W, SIGMA, q.p)?.value;
            let ap_out = ap_dyadic_components(&s.tree, W, SIGMA, q.p)?.value;
            let boundary = boundary_defect(&s, 32)?;
            let values = json!({
                "config": s.config,
                "census": s.census,
                "decomposition_error": s.decomposition_error,
                "identity_defect": s.identity_defect,
                "leftover_mass": s.leftover_mass(),
                "boundary_defect": boundary,
                "damage_mult": [din, dout],
                "ap": [ap_in, ap_out],
                "height": s.tree.height(),
            });
            let checks = vec![
                Check::flag("decomposition", s.decomposition_ok()),
                Check::le("identity_defect", s.identity_defect, 1e-12),
                Check::le("boundary_defect", boundary, 1e-12),
                Check::le("damage_rel", (din - dout).abs() / din.max(f64::MIN_POSITIVE), 1e-9),
                Check::eq("ap_equal", ap_out, ap_in),
            ];
            Ok(Report::new("transform remodel", cli.seed, &values, checks)?)
        }
    }
}

fn pipeline(cli: &Cli, p: &Pipeline) -> Result<Report> {
    match p {
        Pipeline::Hilbert { p, m, d, steps, budget, cap, chase_bits } => {
            let cfg = HilbertConfig {
                p: *p,
                m: *m,
                d: *d,
                steps: *steps,
                budget: *budget,
                chase_bits: *chase_bits,
                cap: *cap,
                ..Default::default()
            };
            let run = hilbert_example(&cfg)?;
            Ok(Report::new("pipeline hilbert", cli.seed, &run.report, run.report.checks())?)
        }
        Pipeline::Sarason { p, kmax, m_step } => {
            let cfg = SarasonConfig { p: *p, kmax: *kmax, m_step: *m_step, ..Default::default() };
            let run = sarason_direct_sum(&cfg)?;
            Ok(Report::new("pipeline sarason", cli.seed, &run.report, run.report.checks())?)
        }
        Pipeline::TwoValued { p, q, eps, d, n, steps } => {
            let cfg = TwoValuedConfig { p: *p, q: *q, eps: *eps, d: *d, n: *n, steps: *steps, ..Default::default() };
            let run = two_valued_weight(&cfg)?;
            Ok(Report::new("pipeline two-valued", cli.seed, &run.report, run.report.checks())?)
        }
    }
}

fn measure(cli: &Cli, a: &MeasureArgs) -> Result<Report> {
    let tree = match &a.quad.input {
        Some(path) => AdaptiveTree::from_json(&read_json(path)?)?,
        None => load_quad(&a.quad)?.tree,
    };
    let (cw, cs) = (a.pair[0], a.pair[1]);
    if cw.max(cs) >= tree.dim {
        bail!("--pair {cw} {cs} is out of range for a tree of dimension {}", tree.dim);
    }
    let mut smooth = Vec::new();
    for c in 0..tree.dim {
        // signed components have no smoothness constant
        if let (Ok(sd), Ok(ssd)) = (dyadic_smoothness(&tree, c), strong_dyadic_smoothness(&tree, c)) {
            smooth.push(json!({"component": c, "s_dyadic": sd, "s_strong_dyadic": ssd}));
        }
    }
    let ap = ap_dyadic_components(&tree, cw, cs, a.quad.p)?;
    let norms = if tree.dim == 4 { Some(quad_norms(&Quad::new(a.quad.p, tree.clone())?)?) } else { None };
    let values = json!({
        "p": a.quad.p,
        "dim": tree.dim,
        "height": tree.height(),
        "distinct_nodes": tree.distinct_nodes(),
        "ap_dyadic": ap,
        "smoothness": smooth,
        "norms": norms,
        "leftover_measure": tree.frozen_measure(),
    });
    Ok(Report::new("measure", cli.seed, &values, vec![Check::flag("finite", ap.value.is_finite())])?)
}

fn verify(cli: &Cli, v: &Verify) -> Result<Report> {
    let seed = cli.seed;
    match v {
        Verify::HilbertLemma => {
            let r = verify_lemmas(seed);
            let checks = vec![
                Check::ge("c_positive", r.c, f64::MIN_POSITIVE),
                Check::le("c_quadrature", (r.c - r.c_quadrature).abs(), 1e-8),
                Check::le("antisymmetry", r.antisymmetry_max, 1e-10),
                Check::le("quadrature", r.quadrature_max_error, 1e-8),
                Check::flag("sign_pairs", r.sign_pairs_ok),
                Check::flag("form_b", r.form_b_ok),
                Check::flag("profile_decreasing", r.profile_decreasing),
                Check::flag("haar_transform_shape", r.haar_transform_increasing && r.haar_transform_concave && r.haar_transform_symmetric),
            ];
            Ok(Report::new("verify hilbert-lemma", seed, &r, checks)?)
        }
        Verify::Appendix { section, p } => {
            let (values, checks) = match section {
                Section::Walks => {
                    let walks: Vec<WalkCheck> = [(1, 1), (1, 2), (3, 5)].iter().map(|&(a, b)| walk_check(a, b, 100_000, seed)).collect();
                    let times: Vec<f64> = (1..=10).map(|d| expected_hitting_time(d, d)).collect();
                    let mut checks: Vec<Check> = walks
                        .iter()
                        .flat_map(|w| {
                            let tag = format!("{}_{}", w.a, w.b);
                            [
                                Check::le(format!("chain_{tag}"), (w.chain - w.closed_form).abs(), 1e-12),
                                Check::flag(format!("monte_carlo_{tag}"), w.mc_ok),
                            ]
                        })
                        .collect();
                    let worst = times.iter().enumerate().map(|(i, t)| (t - ((i + 1) * (i + 1)) as f64).abs()).fold(0.0, f64::max);
                    checks.push(Check::le("hitting_time", worst, 1e-9));
                    (json!({"walks": walks, "hitting_times": times}), checks)
                }
                Section::Hyperbola => {
                    let s = lower_hyperbola_solve(1.25, 1.0, 2.0)?;
                    let b1 = 1.0 - 0.2f64.sqrt();
                    let err = (s.b1 - b1).abs().max((s.a1 - 1.0 / b1).abs());
                    let u = upper_hyperbola_bound(2.0, 0.5, 0.5, 2.0, 2.0, 25.0 / 16.0)?;
                    let worst = upper_hyperbola_search(*p, 2000, seed);
                    let checks = vec![
                        Check::le("lower_reference", err, 1e-10),
                        Check::flag("upper_reference", u.ok),
                        Check::le("upper_search", worst, 2f64.powf(*p)),
                    ];
                    (json!({"lower": s, "upper": u, "search_worst_ratio": worst}), checks)
                }
                Section::Twoweight => {
                    let r = two_weight_counterexample(*p, &[1e2, 1e4, 1e6], 10_000, seed)?;
                    let checks = vec![
                        Check::le("f_norm", (r.f_norm - 1.0).abs(), 1e-12),
                        Check::le("slope", (r.slope - 1.0).abs(), 0.1),
                        Check::flag("quadrature", r.quadrature_ok),
                    ];
                    (serde_json::to_value(&r)?, checks)
                }
                Section::Nazarov => {
                    let c = transfer_example(*p, 0.5, 1000, seed)?;
                    let checks = vec![
                        Check::flag("smoothness_hypothesis", c.smoothness_hypothesis),
                        Check::flag("claim", c.claim_ok),
                        Check::flag("halves", c.halves_ok),
                        Check::flag("ap_transfer", c.ap_ok),
                    ];
                    (serde_json::to_value(&c)?, checks)
                }
            };
            let name = format!("verify appendix {}", format!("{section:?}").to_lowercase());
            Ok(Report::new(name, seed, &values, checks)?)
        }
    }
}

fn sweep(cli: &Cli, a: &SweepArgs) -> Result<Report> {
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for &p in &a.p {
        for &m in &a.m {
            let tag = format!("p{p}_M{m}");
            let row = match a.pipeline {
                SweepPipeline::Hilbert => {
                    let run = hilbert_example(&HilbertConfig { p, m, ..Default::default() })?;
                    let r = run.report;
                    checks.extend(r.checks().into_iter().map(|c| Check { name: format!("{tag}.{}", c.name), ..c }));
                    SweepRow { p, m, value: r.normalized, ratio: r.ratio_to_m, leftover: r.leftover_mass, seed: cli.seed }
                }
                SweepPipeline::LargeMult | SweepPipeline::LargeShift => {
                    let v = if a.pipeline == SweepPipeline::LargeMult { Variant::Mult } else { Variant::Shift };
                    let (_, r) = large_step_report(&LargeStepParams::new(p, m)?, v)?;
                    checks.push(Check::flag(format!("{tag}.ap_window"), r.window_ok()));
                    SweepRow { p, m, value: r.normalized_damage, ratio: r.normalized_damage / m, leftover: 0.0, seed: cli.seed }
                }
            };
            info!("{tag}: value {}", row.value);
            rows.push(row);
        }
    }
    if let Some(path) = &cli.csv {
        fs::write(path, to_csv(&rows)).with_context(|| format!("writing {}", path.display()))?;
    }
    let name = format!("sweep {}", format!("{:?}", a.pipeline).to_lowercase());
    Ok(Report::new(name, cli.seed, &rows, checks)?)
}

/// Re-derives the verdict of a saved report from its checks.
fn recheck(cli: &Cli, input: &Path) -> Result<bool> {
    let v = read_json(input)?;
    let version = v.get("schema_version").and_then(Value::as_u64).context("report has no schema_version")?;
    if version != SCHEMA_VERSION as u64 {
        bail!("unsupported schema_version {version} (expected {SCHEMA_VERSION})");
    }
    let checks = v.get("checks").and_then(Value::as_array).context("report has no checks")?;
    let mut pass = true;
    for c in checks {
        let ok = c.get("pass").and_then(Value::as_bool).context("check without a verdict")?;
        if !ok {
            let name = c.get("name").and_then(Value::as_str).unwrap_or("?");
            eprintln!("check failed: {name}");
        }
        pass &= ok;
    }
    let stored = v.get("pass").and_then(Value::as_bool);
    if stored != Some(pass) {
        bail!("stored verdict {stored:?} disagrees with its checks");
    }
    let summary = json!({"schema_version": version, "command": v.get("command"), "pass": pass, "checks": checks.len()});
    let text = serde_json::to_string_pretty(&summary)? + "\n";
    match &cli.json {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(pass)
}

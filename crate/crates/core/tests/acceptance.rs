//! Acceptance suite: one verdict line per criterion.
//!
//! Run with `cargo test -p cexlab-core --test acceptance -- --nocapture`.

use std::collections::HashSet;
use std::time::{Duration, Instant};

use cexlab_core::appendix::*;
use cexlab_core::characteristics::{ap_dyadic_components, dyadic_smoothness, strong_dyadic_smoothness};
use cexlab_core::hilbert::verify_lemmas;
use cexlab_core::large_step::*;
use cexlab_core::numeric::ols_slope;
use cexlab_core::pipelines::*;
use cexlab_core::remodel::*;
use cexlab_core::small_step::*;
use cexlab_core::tree::{AdaptiveTree, Node, F, G, SIGMA, W};
use cexlab_core::DyadicInterval;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria expected to fail at desk scale; see README.
const KNOWN_FAILURES: &[u32] = &[10];

// locked floors, measured on the first green run
const MULT_FLOOR_P2: f64 = 1.35;
const HILBERT_RATIO_FLOOR: f64 = 0.025;
const SARASON_C: f64 = 1.25;
const SARASON_FLOOR: f64 = 0.015;
const TWO_WEIGHT_C: [(f64, f64); 3] = [(1.5, 1.25), (2.0, 2.25), (3.0, 12.0)];

type Criterion = (u32, &'static str, Option<Duration>, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Verdict) -> Verdict {
    let t = Instant::now();
    let mut v = f();
    let el = t.elapsed();
    if let Some(l) = limit {
        if el > l {
            v.pass = false;
            v.detail.push_str(&format!("; runtime {el:.2?} over {l:?}"));
            return v;
        }
    }
    v.detail.push_str(&format!("; {el:.2?}"));
    v
}

fn c1() -> Verdict {
    let ms = [4.0, 8.0, 16.0, 32.0];
    let mut dmg = Vec::new();
    let mut worst = f64::INFINITY;
    for m in ms {
        let (_, r) = large_step_report(&LargeStepParams::new(2.0, m).unwrap(), Variant::Mult).unwrap();
        dmg.push(r.damage.ln());
        worst = worst.min(r.normalized_damage / m);
    }
    let xs: Vec<f64> = ms.iter().map(|m: &f64| m.ln()).collect();
    let slope = ols_slope(&xs, &dmg);
    verdict(
        (slope - 2.0).abs() <= 0.2 && worst >= MULT_FLOOR_P2,
        format!("slope {slope:.4}, min normalized/M {worst:.4} (floor {MULT_FLOOR_P2})"),
    )
}

fn c2() -> Verdict {
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for p in [1.5, 2.0, 3.0] {
        for m in [4.0, 16.0] {
            let (_, r) = large_step_report(&LargeStepParams::new(p, m).unwrap(), Variant::Mult).unwrap();
            ok &= r.window_ok();
            worst = worst.max(r.ap.value / m);
        }
    }
    verdict(ok, format!("max [w]/M = {worst:.4} within [1, 4e]"))
}

fn c3() -> Verdict {
    let s = lower_hyperbola_solve(1.25, 1.0, 2.0).unwrap();
    let b1 = 1.0 - 0.2f64.sqrt();
    let b2 = 1.0 + 0.2f64.sqrt();
    let mut err = [(s.b1 - b1), (s.b2 - b2), (s.a1 - 1.0 / b1), (s.a2 - 1.0 / b2)].iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let p = rng.gen_range(1.1..5.0);
        let y: f64 = rng.gen_range(0.01..100.0);
        let x = rng.gen_range(1.0..50.0) * y.powf(1.0 - p);
        let s = lower_hyperbola_solve(x, y, p).unwrap();
        err = err
            .max((s.a1 * s.b1.powf(p - 1.0) - 1.0).abs())
            .max((s.a2 * s.b2.powf(p - 1.0) - 1.0).abs())
            .max((0.5 * (s.a1 + s.a2) - x).abs() / x)
            .max((0.5 * (s.b1 + s.b2) - y).abs() / y);
    }
    verdict(err <= 1e-10, format!("max error {err:.2e}"))
}

fn c4() -> Verdict {
    let q = build_weights(&LargeStepParams::new(2.0, 4.0).unwrap()).unwrap().quad(Variant::Mult).unwrap();
    let (_, r) = small_step_report(&q, WalkKind::Generic, 8, default_cap(8)).unwrap();
    let rel = (r.damage_ratio() - 1.0).abs();
    let ok =
        r.frozen_measure < 1e-3 && rel <= 2e-3 && r.s_dyadic_out <= 1.0 + (r.s_dyadic_in - 1.0) / 8.0 + 1e-12 && r.ap_out <= 4.0 * r.ap_in;
    verdict(
        ok,
        format!(
            "leftover {:.2e}, damage rel {rel:.2e}, S^d {:.4} -> {:.4}, ap {:.3} -> {:.3}",
            r.frozen_measure, r.s_dyadic_in, r.s_dyadic_out, r.ap_in, r.ap_out
        ),
    )
}

fn c5() -> Verdict {
    let mut ok = true;
    let mut notes = Vec::new();
    for d in 1..=3 {
        let f = stopping_family(&DyadicInterval::unit(), d, 200).unwrap();
        let e = (f.stopped_mass() - 1.0).abs().max((f.plus_mass() - 0.5).abs());
        let im = (f.intermediate_mass - (d * d) as f64).abs();
        ok &= e <= 1e-6 && im <= 1e-3;
        notes.push(format!("d={d}: {e:.1e}/{im:.1e}"));
    }
    for (a, b) in [(1, 1), (1, 2), (3, 5)] {
        ok &= (walk_hit_probability(a, b) - a as f64 / (a + b) as f64).abs() <= 1e-12;
    }
    verdict(ok, notes.join(", "))
}

fn c6() -> Verdict {
    let q = build_weights(&LargeStepParams::new(2.0, 4.0).unwrap()).unwrap().quad(Variant::Shift).unwrap();
    let mut ok = true;
    let mut notes = Vec::new();
    for d in [4, 8] {
        let (_, r) = small_step_report(&q, WalkKind::Triangle, d, default_triangle_cap(d)).unwrap();
        ok &= r.odd_generation_haar == 0.0 && r.damage_ratio() >= 0.2 - 1e-6;
        notes.push(format!("d={d}: ratio {:.4}, odd {:e}", r.damage_ratio(), r.odd_generation_haar));
    }
    verdict(ok, notes.join(", "))
}

fn avg_bits(t: &AdaptiveTree) -> HashSet<Vec<u64>> {
    t.node_averages().iter().map(|v| v.iter().map(|x| x.to_bits()).collect()).collect()
}

fn smooth(rng: &mut ChaCha8Rng, a: f64, depth: u32, delta: f64) -> std::sync::Arc<Node> {
    if depth == 0 {
        return Node::leaf(vec![a]);
    }
    let tmax = delta / (2.0 + delta);
    let t = rng.gen_range(-tmax..=tmax);
    Node::branch(smooth(rng, a * (1.0 - t), depth - 1, delta), smooth(rng, a * (1.0 + t), depth - 1, delta))
}

fn c7() -> Verdict {
    let cfg = RemodelConfig::with_steps(2);
    let sched = Schedule::uniform(3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let vals: Vec<f64> = (0..64).map(|_| rng.gen_range(0.1..5.0)).collect();
    let t = AdaptiveTree::uniform(4, |i| vals[4 * i..4 * i + 4].to_vec()).unwrap();
    let s = remodel_iterate(&t, &sched, &cfg).unwrap();
    let mut ok = avg_bits(&s.tree) == avg_bits(&t);
    let q = build_weights(&LargeStepParams::new(2.0, 4.0).unwrap()).unwrap().quad(Variant::Mult).unwrap();
    let sq = remodel_iterate(&q.tree, &sched, &cfg).unwrap();
    let boundary = boundary_defect(&s, 32).unwrap().max(boundary_defect(&sq, 32).unwrap());
    let (din, dout) = (damage_mult(&q.tree, F, G), damage_mult(&sq.tree, F, G));
    let dmg = (din - dout).abs() / din;
    let ap_eq = ap_dyadic_components(&q.tree, W, SIGMA, 2.0).unwrap().value == ap_dyadic_components(&sq.tree, W, SIGMA, 2.0).unwrap().value;
    ok &= avg_bits(&sq.tree).is_subset(&avg_bits(&q.tree)) && boundary <= 1e-12 && dmg <= 1e-9 && ap_eq;
    let mut s_ok = true;
    for (seed, delta) in [0.01, 0.03, 0.1, 0.3].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
        let t = AdaptiveTree::new(smooth(&mut rng, 1.0, 6, delta), 40).unwrap();
        s_ok &= dyadic_smoothness(&t, 0).unwrap() <= 1.0 + delta + 1e-12;
        let r = remodel_iterate(&t, &sched, &cfg).unwrap();
        s_ok &= strong_dyadic_smoothness(&r.tree, 0).unwrap() <= (1.0 + delta).powi(3) + 1e-12;
    }
    verdict(ok && s_ok, format!("boundary {boundary:.1e}, damage rel {dmg:.1e}, ap equal {ap_eq}, S^sd grid {s_ok}"))
}

fn c8() -> Verdict {
    let r = verify_lemmas(0);
    verdict(
        r.pass() && r.sign_pairs_checked == 50,
        format!(
            "c {:.6}, antisymmetry {:.1e}, quadrature {:.1e}, form (b) {}, profile {}",
            r.c, r.antisymmetry_max, r.quadrature_max_error, r.form_b_ok, r.profile_decreasing
        ),
    )
}

fn c9() -> Verdict {
    let mut ok = true;
    let mut notes = Vec::new();
    for m in [4.0, 8.0] {
        let run = hilbert_example(&HilbertConfig { m, ..Default::default() }).unwrap();
        let r = &run.report;
        ok &= r.checks().iter().all(|c| c.pass) && r.ratio_to_m >= HILBERT_RATIO_FLOOR;
        notes.push(format!(
            "M={m}: identity {:.1e}, Σ|T| {:.3} <= {:.3}, normalized/M {:.4}",
            r.identity_error, r.cross_abs_sum, r.eps_prime, r.ratio_to_m
        ));
    }
    verdict(ok, notes.join("; "))
}

fn c10() -> Verdict {
    let run = sarason_direct_sum(&SarasonConfig::default()).unwrap();
    let r = &run.report;
    let j_exact = r.copies.iter().all(|c| c.j_averages == (1.0, 1.0));
    let floor = r.copies.iter().map(|c| c.ratio_scaled).fold(f64::INFINITY, f64::min);
    let ok = j_exact && r.ap_glued <= SARASON_C && floor >= SARASON_FLOOR && r.spearman >= 0.0;
    let scaled: Vec<String> = r.copies.iter().map(|c| format!("{:.4}", c.ratio_scaled)).collect();
    verdict(
        ok,
        format!(
            "J averages exact {j_exact}, ap {:.4} (C {SARASON_C}), ratio/k^(1/2) [{}], spearman {:.2}",
            r.ap_glued,
            scaled.join(", "),
            r.spearman
        ),
    )
}

fn c11() -> Verdict {
    let mut ok = true;
    let mut notes = Vec::new();
    for p in [2.0, 3.0] {
        for (q, eps) in [(4.0, 1.0), (16.0, 8.0)] {
            let run = two_valued_weight(&TwoValuedConfig { p, q, eps, ..Default::default() }).unwrap();
            let r = &run.report;
            ok &= r.checks().iter().all(|c| c.pass) && r.values.len() == 2;
            notes.push(format!("p={p} Q={q}: ap {:.3} <= {:.0}", r.ap, r.ap_bound));
        }
    }
    verdict(ok, notes.join(", "))
}

fn c12() -> Verdict {
    let mut ok = true;
    let mut notes = Vec::new();
    for (p, c) in TWO_WEIGHT_C {
        let r = two_weight_counterexample(p, &[1e2, 1e4, 1e6], 10_000, 0).unwrap();
        ok &= r.sup_characteristic <= c && (r.slope - 1.0).abs() <= 0.1 && r.quadrature_ok;
        notes.push(format!("p={p}: sup {:.3} <= {c}, slope {:.4}", r.sup_characteristic, r.slope));
    }
    verdict(ok, notes.join(", "))
}

#[test]
fn acceptance() {
    let s = |x| Some(Duration::from_secs(x));
    let criteria: Vec<Criterion> = vec![
        (1, "large-step growth", s(1), c1),
        (2, "characteristic window", s(1), c2),
        (3, "hyperbola truncation", None, c3),
        (4, "small-step generic", s(10), c4),
        (5, "stopping laws", None, c5),
        (6, "triangle variant", None, c6),
        (7, "remodel invariants", s(30), c7),
        (8, "hilbert engine", None, c8),
        (9, "end-to-end hilbert", s(300), c9),
        (10, "direct sum", None, c10),
        (11, "two-valued weights", None, c11),
        (12, "power-weight pair", None, c12),
    ];
    let mut failed = Vec::new();
    for (k, name, limit, f) in criteria {
        let v = timed(limit, f);
        println!("criterion {k:>2} {name:<22} {}  {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        if !v.pass {
            failed.push(k);
        }
    }
    assert_eq!(failed, KNOWN_FAILURES, "failing criteria changed");
}

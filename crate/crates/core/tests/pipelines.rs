use cexlab_core::characteristics::ap_dyadic_components;
use cexlab_core::hilbert::{pair_jumps, StepFunctionR};
use cexlab_core::pipelines::*;
use cexlab_core::tree::{AdaptiveTree, Node, W};
use cexlab_core::DyadicInterval;
use proptest::prelude::*;

fn haar_pattern() -> [f64; 4] {
    [-1.0, -1.0, 1.0, 1.0]
}

#[test]
fn contribution_jumps_rebuild_the_pattern() {
    let i = DyadicInterval::new(2, 1).unwrap();
    let v = [0.5, -1.5, 2.0, -1.0];
    let j = contribution_jumps(&i, 3, &v);
    let total: f64 = j.iter().map(|x| x.1).sum();
    assert_eq!(total, 0.0);
    let step = |x: f64| j.iter().filter(|(u, _)| *u <= x).map(|(_, a)| a).sum::<f64>();
    let h = 0.25 / 8.0;
    assert_eq!(step(0.25 + 0.5 * h), 0.0);
    for t in 1..7 {
        for (q, &val) in v.iter().enumerate() {
            let x = 0.25 + t as f64 * h + (q as f64 + 0.5) * h / 4.0;
            assert!((step(x) - val).abs() < 1e-12);
        }
    }
    assert!(step(0.5 - 0.5 * h).abs() < 1e-12);
    assert!(contribution_jumps(&i, 5, &[0.0; 4]).is_empty());
}

#[test]
fn constant_source_accepts_minimal_frequency() {
    let cross = CrossTerms::new(1.0, 2.0);
    let leaf = Node::leaf(vec![1.0, 1.0, 3.0, 4.0]);
    let ch = select_frequency(&cross, &DyadicInterval::unit(), 1, &leaf, 14, 0.0);
    assert_eq!(ch.n, 3);
    assert_eq!(ch.t, 0.0);
    assert!(!ch.exhausted);
}

#[test]
fn oscillating_contribution_decays_against_fixed_function() {
    let fixed = StepFunctionR::new(vec![-0.3, 0.2, 0.45, 0.9, 1.7], vec![1.0, -2.0, 0.5, 3.0]).unwrap();
    let fj = fixed.jumps();
    let i = DyadicInterval::unit();
    let values: Vec<f64> = [3, 6, 12].iter().map(|&n| pair_jumps(&contribution_jumps(&i, n, &haar_pattern()), &fj).abs()).collect();
    assert!(values.windows(2).all(|w| w[1] < w[0]), "{values:?}");
    assert!(values[2] < 1e-2 * values[0]);
}

#[test]
fn tight_budget_is_flagged_not_fatal() {
    let t = AdaptiveTree::uniform(2, |i| vec![1.0, 1.0, [1.0, -2.0, 0.5, 0.5][i], [0.0, 0.0, -1.0, 1.0][i]]).unwrap();
    let cross = CrossTerms::new(0.25, 1.0);
    let ch = select_frequency(&cross, &DyadicInterval::unit(), 1, &t.root, 6, 0.0);
    assert!(ch.exhausted);
    assert_eq!(ch.n, 6);
    assert_eq!(ch.tried.len(), 2);
}

#[test]
fn symmetric_weight_extends_periodically() {
    let t = AdaptiveTree::uniform(2, |i| vec![[1.0, 3.0, 3.0, 1.0][i], 1.0]).unwrap();
    let e = extend_to_line(&t, 2).unwrap();
    assert_eq!(e.mirrored.max_abs_diff(&t).unwrap(), 0.0);
    let s = e.to_step(0, 100).unwrap();
    for x in [0.1, 0.3, 0.6, 0.9] {
        for k in -2..=2 {
            assert_eq!(s.eval(x + k as f64), s.eval(x));
        }
    }
}

#[test]
fn extension_cells_translate_and_reflect() {
    let t = AdaptiveTree::uniform(2, |i| vec![[1.0, 2.0, 4.0, 8.0][i], 1.0]).unwrap();
    let e = extend_to_line(&t, 1).unwrap();
    let s = e.to_step(0, 100).unwrap();
    assert_eq!(s.support(), (-1.0, 2.0));
    assert_eq!(s.eval(0.1), 1.0);
    assert_eq!(s.eval(1.1), 8.0);
    assert_eq!(s.eval(-0.1), 1.0);
    assert_eq!(s.eval(-0.9), 8.0);
    assert_eq!(e.seam_defect(2).unwrap(), 0.0);
    assert_eq!(e.ap_dyadic(0, 1, 2.0).unwrap(), ap_dyadic_components(&t, 0, 1, 2.0).unwrap().value.max(3.75));
    assert_eq!(e.strong_smoothness(0).unwrap(), cexlab_core::characteristics::strong_dyadic_smoothness(&t, 0).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn extension_preserves_characteristics(vals in prop::collection::vec(0.2f64..5.0, 16)) {
        let t = AdaptiveTree::uniform(4, |i| vec![vals[i], 1.0 / vals[i]]).unwrap();
        let e = extend_to_line(&t, 3).unwrap();
        let ap = ap_dyadic_components(&t, 0, 1, 2.0).unwrap().value;
        prop_assert_eq!(e.ap_dyadic(0, 1, 2.0).unwrap(), ap);
        let s = cexlab_core::characteristics::strong_dyadic_smoothness(&t, 0).unwrap();
        prop_assert_eq!(e.strong_smoothness(0).unwrap(), s);
        prop_assert_eq!(e.seam_defect(4).unwrap(), 0.0);
    }
}

#[test]
fn hilbert_example_small() {
    let run = hilbert_example(&HilbertConfig::default()).unwrap();
    let r = &run.report;
    for c in r.checks() {
        assert!(c.pass, "{c:?}");
    }
    assert!(r.c > 0.0);
    assert!(r.normalized >= 0.01 * r.config.m);
    // level sets of the remodeled weight match the small-step output up to frozen mass
    let a = run.source.tree.level_measures(W, true);
    let b = run.state.tree.level_measures(W, true);
    let defect: f64 = a.iter().map(|(v, m)| (m - b.iter().find(|x| x.0 == *v).map_or(0.0, |x| x.1)).abs()).sum();
    assert!(defect <= r.leftover_mass + 1e-12);
    // the remodeled boundary keeps the global average
    assert_eq!(cexlab_core::remodel::boundary_defect(&run.state, 16).unwrap(), 0.0);
}

#[test]
fn hilbert_example_rejects_small_m() {
    assert!(hilbert_example(&HilbertConfig { m: 1.0, ..Default::default() }).is_err());
}

#[test]
fn sarason_single_copy() {
    let run = sarason_direct_sum(&SarasonConfig { kmax: 1, ..Default::default() }).unwrap();
    let r = &run.report;
    assert_eq!(r.copies[0].j_averages, (1.0, 1.0));
    assert_eq!(run.glued.root.avg()[0], 1.0);
    for c in r.checks() {
        assert!(c.pass, "{c:?}");
    }
    assert!(sarason_direct_sum(&SarasonConfig { kmax: 7, ..Default::default() }).is_err());
}

#[test]
fn two_valued_small() {
    let run = two_valued_weight(&TwoValuedConfig { q: 1.5, eps: 4.0, ..Default::default() }).unwrap();
    let r = &run.report;
    for c in r.checks() {
        assert!(c.pass, "{c:?}");
    }
    assert_eq!(r.values.len(), 2);
    assert!(two_valued_weight(&TwoValuedConfig { q: 1.0, ..Default::default() }).is_err());
}

#[test]
fn transfer_example_meets_the_lemma() {
    let c = transfer_example(2.0, 0.5, 1000, 3).unwrap();
    assert!(c.smoothness_hypothesis, "{c:?}");
    assert!(c.claim_ok && c.halves_ok && c.ap_ok, "{c:?}");
}

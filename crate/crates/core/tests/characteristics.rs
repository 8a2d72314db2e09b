use std::sync::Arc;

use cexlab_core::characteristics::*;
use cexlab_core::hilbert::StepFunctionR;
use cexlab_core::tree::{AdaptiveTree, Node};
use cexlab_core::DyadicInterval;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_weight(rng: &mut ChaCha8Rng, depth: u32) -> Arc<Node> {
    if depth == 0 || rng.gen_bool(0.25) {
        return Node::leaf(vec![rng.gen_range(0.05..20.0)]);
    }
    Node::branch(random_weight(rng, depth - 1), random_weight(rng, depth - 1))
}

fn pair(seed: u64, p: f64) -> (AdaptiveTree, AdaptiveTree) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = AdaptiveTree::new(random_weight(&mut rng, 6), 40).unwrap();
    let s = w.map_leaves(|v| vec![v[0].powf(1.0 / (1.0 - p))]);
    (w, s)
}

#[test]
fn line_probes_on_constant_weight() {
    let one = ConstantWeight { value: 1.0, window: (-4.0, 4.0) };
    assert!((sampled_ap(&one, &one, 2.0, 500, 7) - 1.0).abs() < 1e-12);
    assert!((sampled_doubling(&one, 500, 7) - 2.0).abs() < 1e-12);
    for lambda in [0.1, 1.0, 10.0] {
        let pr = poisson_vs_average(&one, 0.3, lambda, 2.0).unwrap();
        assert!(pr.converged);
        assert!((pr.avg - 1.0).abs() < 1e-12);
        assert!((pr.value - std::f64::consts::PI).abs() < 1e-8, "{}", pr.value);
    }
}

#[test]
fn reflected_weight_matches_base_on_unit_interval() {
    let base = StepFunctionR::new(vec![0.0, 0.5, 1.0], vec![1.0, 3.0]).unwrap();
    let r = ReflectedWeight::new(base, 2).unwrap();
    assert_eq!(r.value(0.25), 1.0);
    assert_eq!(r.value(1.25), 3.0);
    assert_eq!(r.value(-0.25), 1.0);
    assert!((r.integral(-2.0, 3.0) - 10.0).abs() < 1e-12);
}

#[test]
fn shift_example_norms() {
    // 𝐟 = σ·f, 𝐠 = w·g with |f| = |g| = 1: both norms reduce to masses
    let w = AdaptiveTree::uniform(2, |k| vec![[1.0, 2.0, 5.0, 0.5][k]]).unwrap();
    let s = w.map_leaves(|v| vec![1.0 / v[0]]);
    let bold_g = w.map_leaves(|v| vec![-v[0]]);
    let bold_f = AdaptiveTree::zip(&[&s, &AdaptiveTree::haar_function(&DyadicInterval::unit())]).map_leaves(|v| vec![v[0] * v[1]]);
    let wm = w.root.avg()[0];
    let sm = s.root.avg()[0];
    assert!((weighted_norm(&bold_g, &w, 2.0).unwrap().powi(2) - wm).abs() < 1e-12);
    assert!((weighted_norm(&bold_f, &s, 3.0).unwrap().powi(3) - sm).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn strong_smoothness_dominates(seed in any::<u64>()) {
        let (w, _) = pair(seed, 2.0);
        let sd = dyadic_smoothness(&w, 0).unwrap();
        let ssd = strong_dyadic_smoothness(&w, 0).unwrap();
        prop_assert!(ssd >= sd && sd >= 1.0);
        prop_assert_eq!(smoothness(&w, 0, SmoothnessKind::StrongDyadic).unwrap(), ssd);
    }

    #[test]
    fn jensen_and_coarsening(seed in any::<u64>(), p in 1.2f64..4.0, n in 0u32..5) {
        let (w, s) = pair(seed, p);
        let full = ap_dyadic(&w, &s, p).unwrap();
        prop_assert!(full.value >= 1.0 - 1e-12);
        let coarse = ap_dyadic(&w.expectation(n), &s.expectation(n), p).unwrap();
        prop_assert!(coarse.value <= full.value * (1.0 + 1e-12));
        let at = full.argmax.clone();
        let (a, b) = (w.average(&at).unwrap()[0], s.average(&at).unwrap()[0]);
        prop_assert!((a * b.powf(p - 1.0) - full.value).abs() <= 1e-12 * full.value);
    }

    #[test]
    fn duality(seed in any::<u64>(), p in 1.2f64..4.0) {
        let (w, s) = pair(seed, p);
        let pp = p / (p - 1.0);
        let a = ap_dyadic(&w, &s, p).unwrap().value.powf(pp - 1.0);
        let b = ap_dyadic(&s, &w, pp).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-9 * b);
    }

    #[test]
    fn weighted_norm_homogeneous_and_rearrangement_invariant(seed in any::<u64>(), lambda in -5.0f64..5.0, q in 1.2f64..4.0) {
        let (w, _) = pair(seed, 2.0);
        let (b, _) = pair(seed ^ 0xb01d, 2.0);
        let n = weighted_norm(&b, &w, q).unwrap();
        let scaled = weighted_norm(&b.scale(lambda), &w, q).unwrap();
        prop_assert!((scaled - lambda.abs() * n).abs() <= 1e-10 * n.max(1.0));
        let cells: Vec<DyadicInterval> = (0..8).map(|i| DyadicInterval::new(3, i).unwrap()).collect();
        let mut targets = cells.clone();
        targets.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let plan: Vec<_> = cells.into_iter().zip(targets).collect();
        let moved = weighted_norm(&b.compose_rearrangement(&plan).unwrap(), &w.compose_rearrangement(&plan).unwrap(), q).unwrap();
        prop_assert!((moved - n).abs() <= 1e-10 * n.max(1.0));
    }
}

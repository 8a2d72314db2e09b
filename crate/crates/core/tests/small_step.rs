use std::sync::Arc;

use cexlab_core::appendix::expected_hitting_time;
use cexlab_core::characteristics::{ap_dyadic_components, dyadic_smoothness};
use cexlab_core::large_step::{build_weights, quad_norms, LargeStepParams, Variant};
use cexlab_core::small_step::*;
use cexlab_core::tree::{AdaptiveTree, Node, SIGMA, W};
use cexlab_core::DyadicInterval;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random weight pair `(w, w^{1-p'})` plus a signed component.
fn random_input(seed: u64, p: f64) -> AdaptiveTree {
    fn node(rng: &mut ChaCha8Rng, depth: u32, p: f64) -> Arc<Node> {
        if depth == 0 || rng.gen_bool(0.3) {
            let w: f64 = rng.gen_range(0.1..10.0);
            return Node::leaf(vec![w, w.powf(1.0 / (1.0 - p)), rng.gen_range(-2.0..2.0)]);
        }
        Node::branch(node(rng, depth - 1, p), node(rng, depth - 1, p))
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    AdaptiveTree::new(node(&mut rng, 4, p), 200).unwrap()
}

fn level_defect(a: &AdaptiveTree, b: &AdaptiveTree, c: usize) -> f64 {
    let (la, lb) = (a.level_measures(c, false), b.level_measures(c, false));
    let mut keys: Vec<f64> = la.iter().chain(lb.iter()).map(|x| x.0).collect();
    keys.sort_by(f64::total_cmp);
    keys.dedup();
    let get = |l: &[(f64, f64)], v: f64| l.iter().find(|x| x.0 == v).map_or(0.0, |x| x.1);
    keys.iter().map(|&v| (get(&la, v) - get(&lb, v)).abs()).sum()
}

#[test]
fn intermediate_mass_is_squared_order() {
    for d in 1..=5u32 {
        let m = intermediate_mass(d, default_cap(d)).unwrap();
        let oracle = expected_hitting_time(d, d);
        assert!((oracle - (d * d) as f64).abs() < 1e-9);
        assert!((m - oracle).abs() < 1e-3 * oracle, "d = {d}: {m}");
    }
}

#[test]
fn stopped_mass_grows_with_cap() {
    let mut last = 0.0;
    for cap in [4, 8, 16, 32, 64, 128] {
        let f = triangle_stopping(&DyadicInterval::unit(), 2, cap).unwrap();
        let s = f.stopped_mass();
        assert!(s >= last);
        assert!((s + f.leftover_mass() - 1.0).abs() < 1e-12);
        last = s;
    }
    // geometric tail
    assert!(last > 0.99);
}

#[test]
fn generic_transform_keeps_damage() {
    let q = build_weights(&LargeStepParams::new(2.0, 4.0).unwrap()).unwrap().quad(Variant::Mult).unwrap();
    let (_, r) = small_step_report(&q, WalkKind::Generic, 8, default_cap(8)).unwrap();
    assert!((r.damage_ratio() - 1.0).abs() <= 2e-3, "{}", r.damage_ratio());
    assert!(r.s_dyadic_out <= r.s_dyadic_bound + 1e-12);
    assert!(r.ap_out <= 4.0 * r.ap_in);
}

#[test]
fn triangle_transform_constants() {
    for d in [4, 8] {
        let q = build_weights(&LargeStepParams::new(2.0, 4.0).unwrap()).unwrap().quad(Variant::Shift).unwrap();
        let (qo, r) = small_step_report(&q, WalkKind::Triangle, d, default_triangle_cap(d)).unwrap();
        assert_eq!(r.odd_generation_haar, 0.0);
        assert!(r.damage_ratio() >= 0.2 - 1e-6, "d = {d}: {}", r.damage_ratio());
        let (_, g_in) = quad_norms(&q).unwrap();
        let (_, g_out) = quad_norms(&qo).unwrap();
        assert!((g_in - g_out).abs() <= 1e-10 * g_in);
        assert_eq!(qo.tree.root.avg()[SIGMA], q.tree.root.avg()[SIGMA]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generic_transform_invariants(seed in any::<u64>(), d in 2u32..4, p in 1.5f64..3.0) {
        let t = random_input(seed, p);
        let out = small_step_transform(&t, d, default_cap(d)).unwrap();
        prop_assert!(out.frozen_measure < 1e-2);
        for c in 0..3 {
            prop_assert!(level_defect(&t, &out.tree, c) <= 2.0 * out.frozen_measure + 1e-12);
        }
        let s_in = dyadic_smoothness(&t, W).unwrap();
        prop_assert!(dyadic_smoothness(&out.tree, W).unwrap() <= 1.0 + (s_in - 1.0) / d as f64 + 1e-12);
        let ap_in = ap_dyadic_components(&t, W, SIGMA, p).unwrap().value;
        let ap_out = ap_dyadic_components(&out.tree, W, SIGMA, p).unwrap().value;
        prop_assert!(ap_out <= 2f64.powf(p) * ap_in * (1.0 + 1e-12));
        // maximal function of the signed component only gets larger
        let (m_in, m_out) = (maximal_distribution(&t, 2), maximal_distribution(&out.tree, 2));
        for &(v, _) in &m_in {
            prop_assert!(tail_measure(&m_out, v) >= tail_measure(&m_in, v) - out.frozen_measure - 1e-12);
        }
    }
}

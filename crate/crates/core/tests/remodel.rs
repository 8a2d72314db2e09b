use std::collections::HashSet;
use std::sync::Arc;

use cexlab_core::characteristics::{ap_dyadic_components, dyadic_smoothness, strong_dyadic_smoothness};
use cexlab_core::large_step::damage_mult;
use cexlab_core::remodel::*;
use cexlab_core::tree::{AdaptiveTree, Node};
use cexlab_core::DyadicInterval;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn avg_bits(t: &AdaptiveTree) -> HashSet<Vec<u64>> {
    t.node_averages().iter().map(|v| v.iter().map(|x| x.to_bits()).collect()).collect()
}

fn smooth(rng: &mut ChaCha8Rng, a: f64, depth: u32, delta: f64) -> Arc<Node> {
    if depth == 0 {
        return Node::leaf(vec![a]);
    }
    let tmax = delta / (2.0 + delta);
    let t = rng.gen_range(-tmax..=tmax);
    Node::branch(smooth(rng, a * (1.0 - t), depth - 1, delta), smooth(rng, a * (1.0 + t), depth - 1, delta))
}

fn random_tree(values: &[f64], depth: u32) -> AdaptiveTree {
    AdaptiveTree::uniform(depth, |i| (0..4).map(|c| values[(4 * i + c) % values.len()]).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn remodel_invariants(values in prop::collection::vec(0.1f64..5.0, 64), depth in 2u32..5, n in 3u32..6, steps in 1u32..3) {
        let t = random_tree(&values, depth);
        let cfg = RemodelConfig::with_steps(steps);
        let s = remodel_iterate(&t, &Schedule::uniform(n).unwrap(), &cfg).unwrap();
        prop_assert!(s.decomposition_ok(), "{:?}", s.decomposition_error);
        prop_assert!(s.identity_defect < 1e-12);
        prop_assert!(avg_bits(&s.tree).is_subset(&avg_bits(&t)));
        prop_assert!(boundary_defect(&s, 64).unwrap() <= 1e-12);
        let left = s.leftover_mass();
        prop_assert!(left < steps as f64 * 2f64.powi(-30));
        for c in 0..4 {
            let a = t.level_measures(c, false);
            let b = s.tree.level_measures(c, true);
            let mut defect = 0.0;
            for (v, m) in &a {
                let mo = b.iter().find(|x| x.0 == *v).map_or(0.0, |x| x.1);
                defect += (m - mo).abs();
            }
            prop_assert!(defect <= left + 1e-12, "component {} defect {}", c, defect);
        }
        let (din, dout) = (damage_mult(&t, 2, 3), damage_mult(&s.tree, 2, 3));
        prop_assert!((din - dout).abs() <= 1e-9 * din.max(1.0));
        let ap_in = ap_dyadic_components(&t, 0, 1, 2.0).unwrap().value;
        let ap_out = ap_dyadic_components(&s.tree, 0, 1, 2.0).unwrap().value;
        prop_assert_eq!(ap_in, ap_out);
    }

    #[test]
    fn child_stepping_keeps_decomposition(values in prop::collection::vec(0.1f64..5.0, 32), n in 3u32..5) {
        let t = random_tree(&values, 3);
        let cfg = RemodelConfig { stepping: Stepping::Children, ..RemodelConfig::with_steps(2) };
        let s = remodel_iterate(&t, &Schedule::uniform(n).unwrap(), &cfg).unwrap();
        prop_assert!(s.decomposition_ok());
        prop_assert!(avg_bits(&s.tree).is_subset(&avg_bits(&t)));
    }
}

#[test]
fn averages_cover_input_at_matched_depth() {
    let t = random_tree(&[1.0, 2.0, 3.5, 0.5, 4.0, 1.5, 2.5, 3.0, 0.7], 4);
    let s = remodel_iterate(&t, &Schedule::uniform(3).unwrap(), &RemodelConfig::default()).unwrap();
    assert_eq!(avg_bits(&s.tree), avg_bits(&t));
}

#[test]
fn strong_smoothness_within_cubed_bound() {
    for (seed, delta) in [0.01, 0.03, 0.1, 0.3].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
        let t = AdaptiveTree::new(smooth(&mut rng, 1.0, 6, delta), 40).unwrap();
        let sd = dyadic_smoothness(&t, 0).unwrap();
        assert!(sd <= 1.0 + delta + 1e-12);
        let s = remodel_iterate(&t, &Schedule::uniform(3).unwrap(), &RemodelConfig::with_steps(2)).unwrap();
        let bound = (1.0 + delta).powi(3) + 1e-12;
        assert!(strong_dyadic_smoothness(&s.tree, 0).unwrap() <= bound);
        for x in &s.averaged {
            assert!(strong_dyadic_smoothness(x, 0).unwrap() <= bound);
        }
    }
}

#[test]
fn scheduled_interval_gets_its_frequency() {
    let t = random_tree(&[1.0, 2.0, 3.0, 4.0, 0.5], 3);
    let mut sched = Schedule::uniform(3).unwrap();
    let target = DyadicInterval::new(3, 0).unwrap();
    sched.insert(target.clone(), 5).unwrap();
    let cfg = RemodelConfig::with_steps(1);
    let starts = starting_intervals(&t, &sched, &cfg, 8, false).unwrap();
    let hit = starts.iter().find(|s| s.interval == target).expect("exceptional cell is a starting interval");
    assert_eq!(hit.frequency, 5);
    assert!(starts.windows(2).all(|w| w[0].interval.gen <= w[1].interval.gen));
    let s = remodel_iterate(&t, &sched, &cfg).unwrap();
    let plain = remodel_iterate(&t, &Schedule::uniform(3).unwrap(), &cfg).unwrap();
    assert!(s.decomposition_ok());
    // the first regular cell of the rescheduled interval sits at generation 3 + 5
    let cell = DyadicInterval::new(8, 1).unwrap();
    assert_eq!(s.tree.average(&cell.left()).unwrap(), t.average(&DyadicInterval::new(1, 0).unwrap()).unwrap());
    assert!(s.tree.max_abs_diff(&plain.tree).unwrap() > 0.0);
    assert_eq!(s.census[0].regular_mass, plain.census[0].regular_mass);
}

#[test]
fn interior_schedule_entry_is_honoured() {
    let t = random_tree(&[1.0, 2.0, 3.0, 4.0, 0.5], 3);
    let mut sched = Schedule::uniform(3).unwrap();
    // grandchild of the regular cell 3:2, a step-2 starting interval
    let target = DyadicInterval::new(5, 9).unwrap();
    sched.insert(target.clone(), 4).unwrap();
    let cfg = RemodelConfig::with_steps(2);
    let s = remodel_iterate(&t, &sched, &cfg).unwrap();
    assert!(s.decomposition_ok());
    let sub = s.tree.subtree_at(&target).unwrap();
    let q = s.tree.subtree_at(&DyadicInterval::new(5, 13).unwrap()).unwrap();
    assert_eq!(sub.root.avg(), q.root.avg());
    assert!(sub.max_abs_diff(&q).unwrap() > 0.0);
}

#[test]
fn leftover_respects_chase_tolerance() {
    let t = random_tree(&[1.0, 2.0, 3.0], 3);
    for bits in [6, 12, 30] {
        let cfg = RemodelConfig { chase_bits: bits, ..RemodelConfig::with_steps(1) };
        let s = remodel_iterate(&t, &Schedule::uniform(4).unwrap(), &cfg).unwrap();
        assert!(s.leftover_mass() < 2f64.powi(-(bits as i32)));
        assert!((s.tree.frozen_measure() - s.leftover_mass()).abs() < 1e-15);
    }
}

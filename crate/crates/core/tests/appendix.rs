use cexlab_core::appendix::*;
use cexlab_core::characteristics::ConstantWeight;
use proptest::prelude::*;

#[test]
fn walk_laws_on_full_grid() {
    for a in 1..=50 {
        for b in 1..=50 {
            let h = walk_hit_probability(a, b);
            assert!((h - a as f64 / (a + b) as f64).abs() <= 1e-12, "({a},{b})");
            let t = expected_hitting_time(a, b);
            assert!((t - (a * b) as f64).abs() <= 1e-9 * (a * b) as f64, "({a},{b}): {t}");
        }
    }
}

#[test]
fn walk_monte_carlo_within_three_errors() {
    for (a, b) in [(1, 1), (1, 2), (3, 5)] {
        let c = walk_check(a, b, 100_000, 17);
        assert!(c.chain_ok && c.mc_ok, "{c:?}");
    }
}

#[test]
fn power_pair_growth_is_logarithmic() {
    let r = two_weight_counterexample(2.0, &[1e2, 1e4, 1e6], 10_000, 3).unwrap();
    assert!((r.f_norm - 1.0).abs() < 1e-12);
    assert!(r.quadrature_ok);
    assert!((r.slope - 1.0).abs() <= 0.1, "{}", r.slope);
    assert!(r.sup_characteristic.is_finite());
    assert!(two_weight_counterexample(2.0, &[5.0], 10, 0).is_err());
}

#[test]
fn constant_weight_transfer_is_exact() {
    let one = ConstantWeight { value: 1.0, window: (-2.0, 3.0) };
    let c = nazarov_transfer_check(&one, &one, 2.0, 1.0, 1.0, nazarov_delta(0.5), 0.5, 2000, 5);
    assert!((c.claim_worst_ratio - 1.0).abs() < 1e-10);
    assert!((c.halves_worst_ratio - 1.0).abs() < 1e-10);
    assert!(c.claim_ok && c.halves_ok && c.ap_ok);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn lower_split_lands_on_hyperbola(p in 1.1f64..5.0, y in 0.01f64..100.0, excess in 1.0f64..50.0) {
        let x = excess * y.powf(1.0 - p);
        let s = lower_hyperbola_solve(x, y, p).unwrap();
        prop_assert!((0.5 * (s.a1 + s.a2) - x).abs() <= 1e-10 * x);
        prop_assert!((0.5 * (s.b1 + s.b2) - y).abs() <= 1e-10 * y);
        prop_assert!((s.a1 * s.b1.powf(p - 1.0) - 1.0).abs() <= 1e-10);
        prop_assert!((s.a2 * s.b2.powf(p - 1.0) - 1.0).abs() <= 1e-10);
        prop_assert!(s.b1 <= y && y <= s.b2);
    }

    #[test]
    fn upper_chord_stays_below_power_bound(p in 1.1f64..5.0, seed in any::<u64>()) {
        prop_assert!(upper_hyperbola_search(p, 50, seed) <= 2f64.powf(p) + 1e-12);
    }

    #[test]
    fn transfer_delta_satisfies_both_inequalities(eps in 0.01f64..2.0) {
        let d = nazarov_delta(eps);
        prop_assert!(d > 0.0 && d <= 0.25);
        let s = d.sqrt();
        prop_assert!((1.0 - 2.0 * s) * (1.0 + d).powf(-2.0 / s) > (1.0 + eps).powf(-0.5));
        prop_assert!((1.0 + 2.0 * s) * (1.0 + d).powf(2.0 + 2.0 / s) < (1.0 + eps).powf(0.5));
    }
}

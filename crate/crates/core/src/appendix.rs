//! Random-walk stopping laws, hyperbola lemmas, the two-weight power example and the
//! smoothness transfer checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::characteristics::{sampled_ap, LineWeight};
use crate::error::{LabError, Result};
use crate::numeric::{bisect, golden_max, integrate, ols_slope};

/// Solves `-h[i-1]/2 + h[i] - h[i+1]/2 = rhs[i]` with `h` fixed at both ends.
fn solve_walk_chain(rhs: &[f64], left: f64, right: f64) -> Vec<f64> {
    let n = rhs.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    for i in 0..n {
        let mut r = rhs[i];
        if i == 0 {
            r += 0.5 * left;
        }
        if i + 1 == n {
            r += 0.5 * right;
        }
        let denom = if i == 0 { 1.0 } else { 1.0 + 0.5 * c[i - 1] };
        c[i] = -0.5 / denom;
        d[i] = if i == 0 { r } else { (r + 0.5 * d[i - 1]) / denom };
    }
    let mut h = vec![0.0; n];
    for i in (0..n).rev() {
        h[i] = d[i] - if i + 1 < n { c[i] * h[i + 1] } else { 0.0 };
    }
    h
}

/// Probability that a simple symmetric walk from 0 reaches `+b` before `-a`.
pub fn walk_hit_probability(a: u32, b: u32) -> f64 {
    assert!(a >= 1 && b >= 1);
    let n = (a + b - 1) as usize;
    let h = solve_walk_chain(&vec![0.0; n], 0.0, 1.0);
    h[(a - 1) as usize]
}

/// Expected exit time of `(-a, b)` for the walk started at 0.
pub fn expected_hitting_time(a: u32, b: u32) -> f64 {
    assert!(a >= 1 && b >= 1);
    let n = (a + b - 1) as usize;
    let e = solve_walk_chain(&vec![1.0; n], 0.0, 0.0);
    e[(a - 1) as usize]
}

#[derive(Clone, Debug, Serialize)]
pub struct WalkCheck {
    pub a: u32,
    pub b: u32,
    pub chain: f64,
    pub closed_form: f64,
    pub monte_carlo: f64,
    pub std_error: f64,
    pub samples: usize,
    pub chain_ok: bool,
    pub mc_ok: bool,
}

/// Chain solve, closed form `a/(a+b)` and a seeded Monte Carlo companion.
pub fn walk_check(a: u32, b: u32, samples: usize, seed: u64) -> WalkCheck {
    let chain = walk_hit_probability(a, b);
    let closed_form = a as f64 / (a + b) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((a as u64) << 32) ^ b as u64);
    let mut hits = 0usize;
    for _ in 0..samples {
        let mut s: i64 = 0;
        while s > -(a as i64) && s < b as i64 {
            s += if rng.gen::<bool>() { 1 } else { -1 };
        }
        if s == b as i64 {
            hits += 1;
        }
    }
    let mc = hits as f64 / samples as f64;
    let se = (closed_form * (1.0 - closed_form) / samples as f64).sqrt();
    WalkCheck {
        a,
        b,
        chain,
        closed_form,
        monte_carlo: mc,
        std_error: se,
        samples,
        chain_ok: (chain - closed_form).abs() <= 1e-12,
        mc_ok: (mc - closed_form).abs() <= 3.0 * se,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HyperbolaSplit {
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
}

/// Splits `(x, y)` with `x y^{p-1} >= 1` into two points on `a b^{p-1} = 1` with
/// midpoint `(x, y)`. Returns `b1 <= y <= b2`, hence `a1 >= x >= a2`.
pub fn lower_hyperbola_solve(x: f64, y: f64, p: f64) -> Result<HyperbolaSplit> {
    if !(x > 0.0 && y > 0.0 && p > 1.0) {
        return Err(LabError::Hyperbola(format!("need x, y > 0 and p > 1 (x={x}, y={y}, p={p})")));
    }
    let q = x * y.powf(p - 1.0);
    if q < 1.0 - 1e-14 {
        return Err(LabError::Hyperbola(format!("point lies below the hyperbola: x y^(p-1) = {q}")));
    }
    let f = |b: f64| b.powf(1.0 - p) + (2.0 * y - b).powf(1.0 - p) - 2.0 * x;
    if f(y) >= 0.0 {
        return Ok(HyperbolaSplit { a1: x, b1: y, a2: x, b2: y });
    }
    let samples: Vec<f64> = (1..=64).map(|k| f(y * k as f64 / 64.0)).collect();
    if samples.windows(2).any(|w| w[1] > w[0]) {
        return Err(LabError::Hyperbola("objective is not decreasing on (0, y]".into()));
    }
    let mut lo = 0.5 * y;
    while f(lo) <= 0.0 {
        lo *= 0.5;
        if lo < 1e-300 {
            return Err(LabError::Hyperbola("no sign change near 0".into()));
        }
    }
    let b1 = bisect(f, lo, y, 2000).ok_or_else(|| LabError::Hyperbola("bisection failed".into()))?;
    let b2 = 2.0 * y - b1;
    Ok(HyperbolaSplit { a1: b1.powf(1.0 - p), b1, a2: b2.powf(1.0 - p), b2 })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct UpperBound {
    pub sup: f64,
    pub argmax: f64,
    pub bound: f64,
    pub ok: bool,
}

/// Sup of `φ(a) = (x1 + a(x2-x1)) (y1 + a(y2-y1))^{p-1}` over `[0,1]` against `2^p A`.
pub fn upper_hyperbola_bound(x1: f64, y1: f64, x2: f64, y2: f64, p: f64, big_a: f64) -> Result<UpperBound> {
    let prod = |x: f64, y: f64| x * y.powf(p - 1.0);
    let mids = [prod(x1, y1), prod(0.5 * (x1 + x2), 0.5 * (y1 + y2)), prod(x2, y2)];
    if mids.iter().any(|&m| m > big_a * (1.0 + 1e-12)) {
        return Err(LabError::Param(format!("hypothesis violated: products {mids:?} exceed A = {big_a}")));
    }
    let phi = |a: f64| prod(x1 + a * (x2 - x1), y1 + a * (y2 - y1));
    let grid = 1000;
    let mut best = (0.0, phi(0.0));
    for k in 1..=grid {
        let a = k as f64 / grid as f64;
        let v = phi(a);
        if v > best.1 {
            best = (a, v);
        }
    }
    let lo = (best.0 - 1.0 / grid as f64).max(0.0);
    let hi = (best.0 + 1.0 / grid as f64).min(1.0);
    let (ga, gv) = golden_max(phi, lo, hi, 100);
    if gv > best.1 {
        best = (ga, gv);
    }
    let bound = 2f64.powf(p) * big_a;
    Ok(UpperBound { sup: best.1, argmax: best.0, bound, ok: best.1 <= bound })
}

/// Random hyperbola chords satisfying the lemma's hypotheses; returns the largest
/// observed `sup φ / A`, which must stay below `2^p`.
pub fn upper_hyperbola_search(p: f64, trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < trials {
        let y1: f64 = (rng.gen::<f64>() * 8.0 - 4.0).exp();
        let y2: f64 = (rng.gen::<f64>() * 8.0 - 4.0).exp();
        let x1 = y1.powf(1.0 - p) * (1.0 + rng.gen::<f64>());
        let x2 = y2.powf(1.0 - p) * (1.0 + rng.gen::<f64>());
        let prod = |x: f64, y: f64| x * y.powf(p - 1.0);
        let a = prod(x1, y1).max(prod(x2, y2)).max(prod(0.5 * (x1 + x2), 0.5 * (y1 + y2)));
        if let Ok(u) = upper_hyperbola_bound(x1, y1, x2, y2, p, a) {
            worst = worst.max(u.sup / a);
            done += 1;
        }
    }
    worst
}

/// The power pair `w = |t|^{p-1}`, `σ = |t|^{-p/(p-1)}` off `[-1,1]` and 1 on it.
#[derive(Clone, Copy, Debug)]
pub struct PowerPair {
    pub p: f64,
}

impl PowerPair {
    pub fn w_primitive(&self, t: f64) -> f64 {
        t.signum() * t.abs().powf(self.p) / self.p
    }

    pub fn sigma_primitive(&self, t: f64) -> f64 {
        let s = t.abs();
        let v = if s <= 1.0 { s } else { 1.0 + (self.p - 1.0) * (1.0 - s.powf(-1.0 / (self.p - 1.0))) };
        t.signum() * v
    }

    pub fn characteristic(&self, a: f64, b: f64) -> f64 {
        let len = b - a;
        let w = (self.w_primitive(b) - self.w_primitive(a)) / len;
        let s = (self.sigma_primitive(b) - self.sigma_primitive(a)) / len;
        w * s.powf(self.p - 1.0)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TwoWeightReport {
    pub p: f64,
    pub samples: usize,
    pub sup_characteristic: f64,
    pub f_norm: f64,
    /// `(T, ∫_2^T |ln(t/(t-1))|^p t^{p-1} dt)`; the `1/π` factor of the kernel is left out.
    pub growth: Vec<(f64, f64)>,
    pub slope: f64,
    pub tail_ratio_min: f64,
    pub tail_ratio_max: f64,
    pub quadrature_ok: bool,
}

pub fn two_weight_counterexample(p: f64, t_list: &[f64], samples: usize, seed: u64) -> Result<TwoWeightReport> {
    if !(p > 1.0) {
        return Err(LabError::Param(format!("p = {p} must exceed 1")));
    }
    if t_list.iter().any(|&t| t < 10.0) {
        return Err(LabError::Param("T values must be at least 10".into()));
    }
    let pair = PowerPair { p };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sup: f64 = 0.0;
    for _ in 0..samples {
        let len = 10f64.powf(rng.gen::<f64>() * 8.0 - 3.0);
        let center = (rng.gen::<f64>() * 2.0 - 1.0) * 10f64.powf(rng.gen::<f64>() * 5.0 - 1.0);
        sup = sup.max(pair.characteristic(center - 0.5 * len, center + 0.5 * len));
    }
    let f_norm = pair.sigma_primitive(1.0).powf(1.0 / p);
    let integrand = |s: f64| {
        let t = s.exp();
        (-(-1.0 / t).ln_1p()).powf(p) * t.powf(p)
    };
    let mut ok = true;
    let growth: Vec<(f64, f64)> = t_list
        .iter()
        .map(|&t| {
            let pieces = (t.ln() - 2f64.ln()).ceil().max(1.0) as usize * 4;
            let q = integrate(&integrand, 2f64.ln(), t.ln(), pieces, 1e-10);
            ok &= q.converged;
            (t, q.value)
        })
        .collect();
    let xs: Vec<f64> = growth.iter().map(|g| g.0.ln()).collect();
    let ys: Vec<f64> = growth.iter().map(|g| g.1).collect();
    let slope = ols_slope(&xs, &ys);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for k in 0..=500 {
        let t = 10f64 * 10f64.powf(5.0 * k as f64 / 500.0);
        let r = t * (-(-1.0 / t).ln_1p()).powf(p) * t.powf(p - 1.0);
        lo = lo.min(r);
        hi = hi.max(r);
    }
    Ok(TwoWeightReport {
        p,
        samples,
        sup_characteristic: sup,
        f_norm,
        growth,
        slope,
        tail_ratio_min: lo,
        tail_ratio_max: hi,
        quadrature_ok: ok,
    })
}

/// Largest `δ ∈ (0, 1/4)` (up to bisection accuracy) satisfying both transfer inequalities
/// `(1-2√δ)(1+δ)^{-2/√δ} > (1+ε)^{-1/2}` and `(1+2√δ)(1+δ)^{2+2/√δ} < (1+ε)^{1/2}`.
pub fn nazarov_delta(eps: f64) -> f64 {
    let ok = |d: f64| {
        let s = d.sqrt();
        let lower = (1.0 - 2.0 * s) * (1.0 + d).powf(-2.0 / s) > (1.0 + eps).powf(-0.5);
        let upper = (1.0 + 2.0 * s) * (1.0 + d).powf(2.0 + 2.0 / s) < (1.0 + eps).powf(0.5);
        lower && upper
    };
    let (mut lo, mut hi) = (0.0f64, 0.25f64);
    if ok(hi) {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid > 0.0 && ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

#[derive(Clone, Debug, Serialize)]
pub struct TransferCheck {
    pub delta: f64,
    pub eps: f64,
    pub s_strong_dyadic: f64,
    pub smoothness_hypothesis: bool,
    pub samples: usize,
    pub claim_worst_ratio: f64,
    pub claim_ok: bool,
    pub halves_worst_ratio: f64,
    pub halves_ok: bool,
    pub sampled_ap: f64,
    pub dyadic_ap: f64,
    pub ap_ok: bool,
}

/// Samples arbitrary intervals of the window and checks the endpoint-cell claim,
/// the halves ratio and the `(5/4)` transfer of the characteristic.
#[allow(clippy::too_many_arguments)]
pub fn nazarov_transfer_check(
    w: &dyn LineWeight,
    sigma: &dyn LineWeight,
    p: f64,
    s_strong_dyadic: f64,
    dyadic_ap: f64,
    delta: f64,
    eps: f64,
    samples: usize,
    seed: u64,
) -> TransferCheck {
    let (lo, hi) = w.window();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = (1.0 + eps).sqrt();
    let mut claim_worst: f64 = 1.0;
    let mut halves_worst: f64 = 1.0;
    let span = hi - lo;
    for _ in 0..samples {
        let len = span * 0.5 * 10f64.powf(-4.0 * rng.gen::<f64>());
        let a = lo + rng.gen::<f64>() * (span - len);
        let b = a + len;
        let avg_i = w.integral(a, b) / len;
        let target = delta.sqrt() * len;
        let k = (-target.log2()).ceil();
        let jl = 2f64.powf(-k);
        for end in [a, b - 0.5 * jl] {
            let js = (end / jl).floor() * jl;
            if js < lo || js + jl > hi {
                continue;
            }
            let avg_j = w.integral(js, js + jl) / jl;
            claim_worst = claim_worst.max(avg_j / avg_i).max(avg_i / avg_j);
        }
        let m = 0.5 * (a + b);
        let l = w.integral(a, m);
        let r = w.integral(m, b);
        halves_worst = halves_worst.max(l / r).max(r / l);
    }
    let sampled = sampled_ap(w, sigma, p, samples, seed ^ 0x5a5a);
    TransferCheck {
        delta,
        eps,
        s_strong_dyadic,
        smoothness_hypothesis: s_strong_dyadic <= 1.0 + delta + 1e-12,
        samples,
        claim_worst_ratio: claim_worst,
        claim_ok: claim_worst <= bound + 1e-12,
        halves_worst_ratio: halves_worst,
        halves_ok: halves_worst <= 1.0 + eps + 1e-12,
        sampled_ap: sampled,
        dyadic_ap,
        ap_ok: sampled <= 1.25 * dyadic_ap + 1e-6,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hit_probabilities() {
        assert!((walk_hit_probability(1, 1) - 0.5).abs() < 1e-15);
        assert!((walk_hit_probability(1, 2) - 1.0 / 3.0).abs() < 1e-15);
        assert!((walk_hit_probability(3, 5) - 3.0 / 8.0).abs() < 1e-15);
        for a in 1..=50 {
            for b in 1..=50 {
                let h = walk_hit_probability(a, b);
                assert!((h - a as f64 / (a + b) as f64).abs() < 1e-12, "{a} {b}");
            }
        }
    }

    #[test]
    fn hitting_times() {
        for d in 1..=10 {
            assert!((expected_hitting_time(d, d) - (d * d) as f64).abs() < 1e-9);
        }
        assert!((expected_hitting_time(2, 3) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_agrees() {
        let c = walk_check(3, 5, 20_000, 1);
        assert!(c.chain_ok && c.mc_ok, "{c:?}");
    }

    #[test]
    fn quadratic_oracle() {
        let s = lower_hyperbola_solve(1.25, 1.0, 2.0).unwrap();
        let b1 = 1.0 - 0.2f64.sqrt();
        assert!((s.b1 - b1).abs() < 1e-12);
        assert!((s.b2 - (1.0 + 0.2f64.sqrt())).abs() < 1e-12);
        assert!((s.a1 - 1.0 / b1).abs() < 1e-10);
        assert!((s.a2 - 1.0 / (2.0 - b1)).abs() < 1e-10);
        assert!((0.5 * (s.a1 + s.a2) - 1.25).abs() < 1e-10);
    }

    #[test]
    fn hyperbola_fixed_point_and_rejection() {
        let s = lower_hyperbola_solve(2.0, 0.5, 2.0).unwrap();
        assert_eq!((s.a1, s.b1, s.a2, s.b2), (2.0, 0.5, 2.0, 0.5));
        assert!(lower_hyperbola_solve(1.0, 0.5, 2.0).is_err());
    }

    #[test]
    fn upper_hyperbola_reference() {
        let u = upper_hyperbola_bound(2.0, 0.5, 0.5, 2.0, 2.0, 25.0 / 16.0).unwrap();
        assert!(u.ok);
        assert!((u.sup - 25.0 / 16.0).abs() < 1e-9);
        assert!(upper_hyperbola_bound(4.0, 1.0, 1.0, 1.0, 2.0, 1.0).is_err());
        assert!(upper_hyperbola_search(2.0, 1000, 3) <= 4.0);
        assert!(upper_hyperbola_search(3.0, 1000, 4) <= 8.0);
    }

    #[test]
    fn power_pair_norm_and_growth() {
        let r = two_weight_counterexample(2.0, &[1e2, 1e4, 1e6], 2000, 0).unwrap();
        assert!((r.f_norm - 1.0).abs() < 1e-15);
        assert!((r.slope - 1.0).abs() < 0.1, "{}", r.slope);
        assert!(r.tail_ratio_min > 0.5 && r.tail_ratio_max < 2.0);
        assert!(r.sup_characteristic < 10.0);
    }

    #[test]
    fn delta_solver() {
        let d = nazarov_delta(1.0);
        assert!(d > 0.0 && d < 0.25);
        assert!(nazarov_delta(0.1) < d);
    }
}

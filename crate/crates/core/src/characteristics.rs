//! Muckenhoupt characteristics, smoothness constants, weighted norms and sampled
//! continuous-line probes.

use std::collections::HashSet;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dyadic::DyadicInterval;
use crate::error::{LabError, Result};
use crate::hilbert::StepFunctionR;
use crate::numeric::{adaptive_simpson, Kahan};
use crate::tree::{AdaptiveTree, Flat, Node};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ApDyadic {
    pub value: f64,
    pub argmax: DyadicInterval,
}

fn check_positive(flat: &Flat<'_>, comps: &[usize]) -> Result<()> {
    for n in flat.nodes.iter().filter(|n| n.is_leaf()) {
        for &c in comps {
            let v = n.avg()[c];
            if !(v > 0.0) {
                return Err(LabError::NonPositive(v));
            }
        }
    }
    Ok(())
}

/// `sup_I ⟨w⟩_I ⟨σ⟩_I^{p-1}` over all nodes, with components `cw`, `cs` of one tree.
/// Ties go to the smallest generation, then the smallest index.
pub fn ap_dyadic_components(tree: &AdaptiveTree, cw: usize, cs: usize, p: f64) -> Result<ApDyadic> {
    if !(p > 1.0) {
        return Err(LabError::Param(format!("p = {p} must exceed 1")));
    }
    let flat = tree.flat();
    check_positive(&flat, &[cw, cs])?;
    let val = |n: &Node| n.avg()[cw] * n.avg()[cs].powf(p - 1.0);
    // (value, generation offset of the best node below)
    let mut best: Vec<(f64, u32)> = Vec::with_capacity(flat.len());
    for (i, n) in flat.nodes.iter().enumerate() {
        let own = (val(n), 0u32);
        let b = match flat.kids[i] {
            None => own,
            Some((l, r)) => {
                let mut b = own;
                for cand in [(best[l].0, best[l].1 + 1), (best[r].0, best[r].1 + 1)] {
                    if cand.0 > b.0 || (cand.0 == b.0 && cand.1 < b.1) {
                        b = cand;
                    }
                }
                b
            }
        };
        best.push(b);
    }
    let mut i = flat.root();
    let (value, _) = best[i];
    let mut at = DyadicInterval::unit();
    while best[i].1 > 0 {
        let (l, r) = flat.kids[i].expect("offset > 0 only on branches");
        let target = (best[i].0, best[i].1 - 1);
        if best[l] == target {
            i = l;
            at = at.left();
        } else {
            i = r;
            at = at.right();
        }
    }
    Ok(ApDyadic { value, argmax: at })
}

pub fn ap_dyadic(w: &AdaptiveTree, sigma: &AdaptiveTree, p: f64) -> Result<ApDyadic> {
    if w.dim != 1 || sigma.dim != 1 {
        return Err(LabError::Dim { expected: 1, found: w.dim.max(sigma.dim) });
    }
    ap_dyadic_components(&AdaptiveTree::zip(&[w, sigma]), 0, 1, p)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SmoothnessKind {
    Dyadic,
    StrongDyadic,
}

fn ratio(a: f64, b: f64) -> f64 {
    (a / b).max(b / a)
}

/// `S^d`: worst sibling ratio.
pub fn dyadic_smoothness(tree: &AdaptiveTree, c: usize) -> Result<f64> {
    let flat = tree.flat();
    check_positive(&flat, &[c])?;
    let mut worst: f64 = 1.0;
    for (i, _) in flat.nodes.iter().enumerate() {
        if let Some((l, r)) = flat.kids[i] {
            worst = worst.max(ratio(flat.nodes[l].avg()[c], flat.nodes[r].avg()[c]));
        }
    }
    Ok(worst)
}

/// `S^sd`: worst ratio over adjacent equal-length dyadic intervals.
///
/// Every such pair sits on the inner spines of the two children of its smallest
/// common ancestor, so each branch walks those two spines in lockstep. Pairs of
/// distinct nodes already walked are skipped, which keeps shared subtrees cheap.
pub fn strong_dyadic_smoothness(tree: &AdaptiveTree, c: usize) -> Result<f64> {
    let flat = tree.flat();
    check_positive(&flat, &[c])?;
    let mut worst: f64 = 1.0;
    let mut seen: HashSet<(*const Node, *const Node)> = HashSet::new();
    let mut stack = vec![&tree.root];
    let mut visited: HashSet<*const Node> = HashSet::new();
    while let Some(n) = stack.pop() {
        if !visited.insert(std::sync::Arc::as_ptr(n)) {
            continue;
        }
        let Some((l, r)) = n.children() else { continue };
        stack.push(l);
        stack.push(r);
        let (mut a, mut b) = (l, r);
        loop {
            if !seen.insert((std::sync::Arc::as_ptr(a), std::sync::Arc::as_ptr(b))) {
                break;
            }
            worst = worst.max(ratio(a.avg()[c], b.avg()[c]));
            if a.is_leaf() && b.is_leaf() {
                break;
            }
            a = a.right_or_self();
            b = b.left_or_self();
        }
    }
    Ok(worst)
}

pub fn smoothness(tree: &AdaptiveTree, c: usize, kind: SmoothnessKind) -> Result<f64> {
    match kind {
        SmoothnessKind::Dyadic => dyadic_smoothness(tree, c),
        SmoothnessKind::StrongDyadic => strong_dyadic_smoothness(tree, c),
    }
}

/// `‖bold/weight‖_{L^q(weight)}` from components of one tree; frozen cells included.
pub fn weighted_norm_components(tree: &AdaptiveTree, cb: usize, cw: usize, q: f64) -> Result<f64> {
    if !(q > 1.0) {
        return Err(LabError::Param(format!("q = {q} must exceed 1")));
    }
    let flat = tree.flat();
    check_positive(&flat, &[cw])?;
    let m = flat.masses();
    let mut acc = Kahan::new();
    for (i, n) in flat.nodes.iter().enumerate() {
        if n.is_leaf() {
            let v = n.avg();
            acc.add(m[i] * (v[cb] / v[cw]).abs().powf(q) * v[cw]);
        }
    }
    Ok(acc.value().powf(1.0 / q))
}

pub fn weighted_norm(bold: &AdaptiveTree, weight: &AdaptiveTree, q: f64) -> Result<f64> {
    if bold.dim != 1 || weight.dim != 1 {
        return Err(LabError::Dim { expected: 1, found: bold.dim.max(weight.dim) });
    }
    weighted_norm_components(&AdaptiveTree::zip(&[bold, weight]), 0, 1, q)
}

/// A locally integrable weight on the line, known through its integrals.
pub trait LineWeight {
    fn integral(&self, a: f64, b: f64) -> f64;
    fn value(&self, x: f64) -> f64;
    /// Region where sampling is meaningful.
    fn window(&self) -> (f64, f64);
}

impl LineWeight for StepFunctionR {
    fn integral(&self, a: f64, b: f64) -> f64 {
        StepFunctionR::integral(self, a, b)
    }

    fn value(&self, x: f64) -> f64 {
        self.eval(x)
    }

    fn window(&self) -> (f64, f64) {
        self.support()
    }
}

/// Constant weight on the line.
#[derive(Clone, Copy, Debug)]
pub struct ConstantWeight {
    pub value: f64,
    pub window: (f64, f64),
}

impl LineWeight for ConstantWeight {
    fn integral(&self, a: f64, b: f64) -> f64 {
        self.value * (b - a)
    }

    fn value(&self, _: f64) -> f64 {
        self.value
    }

    fn window(&self) -> (f64, f64) {
        self.window
    }
}

/// A weight on `[0,1)` extended to the whole line: `w(x - k)` on `[k, k+1)` for even `k`,
/// `w(k + 1 - x)` for odd `k`.
#[derive(Clone, Debug)]
pub struct ReflectedWeight {
    pub base: StepFunctionR,
    pub radius: u32,
    total: f64,
}

impl ReflectedWeight {
    pub fn new(base: StepFunctionR, radius: u32) -> Result<Self> {
        if base.support() != (0.0, 1.0) {
            return Err(LabError::Param("base weight must live on [0,1)".into()));
        }
        let total = base.integral(0.0, 1.0);
        Ok(ReflectedWeight { base, radius, total })
    }

    fn primitive(&self, x: f64) -> f64 {
        let k = x.floor();
        let frac = x - k;
        let partial = if (k as i64).rem_euclid(2) == 0 { self.base.integral(0.0, frac) } else { self.base.integral(1.0 - frac, 1.0) };
        k * self.total + partial
    }

    /// The extension restricted to the window `[-radius, radius + 1)`.
    pub fn to_step(&self) -> StepFunctionR {
        let r = self.radius as i64;
        let mut bps = Vec::new();
        let mut vals = Vec::new();
        let rev: Vec<f64> = self.base.breakpoints.iter().rev().map(|b| 1.0 - b).collect();
        let rvals: Vec<f64> = self.base.values.iter().rev().copied().collect();
        for k in -r..=r {
            let (b, v) = if k.rem_euclid(2) == 0 { (&self.base.breakpoints, &self.base.values) } else { (&rev, &rvals) };
            for (j, &val) in v.iter().enumerate() {
                let x = k as f64 + b[j];
                if vals.last() == Some(&val) {
                    continue;
                }
                bps.push(x);
                vals.push(val);
            }
        }
        bps.push((r + 1) as f64);
        StepFunctionR::new(bps, vals).expect("extension is a valid step function")
    }
}

impl LineWeight for ReflectedWeight {
    fn integral(&self, a: f64, b: f64) -> f64 {
        self.primitive(b) - self.primitive(a)
    }

    fn value(&self, x: f64) -> f64 {
        let k = x.floor();
        let frac = x - k;
        if (k as i64).rem_euclid(2) == 0 {
            self.base.eval(frac)
        } else {
            let y = 1.0 - frac;
            if y >= 1.0 {
                *self.base.values.last().unwrap()
            } else {
                self.base.eval(y)
            }
        }
    }

    fn window(&self) -> (f64, f64) {
        (-(self.radius as f64), self.radius as f64 + 1.0)
    }
}

fn sample_interval(rng: &mut ChaCha8Rng, lo: f64, hi: f64, decades: f64) -> (f64, f64) {
    let span = hi - lo;
    let len = span * 10f64.powf(-decades * rng.gen::<f64>());
    let a = lo + rng.gen::<f64>() * (span - len);
    (a, a + len)
}

/// Lower bound for the continuous joint characteristic from random intervals of the
/// window with log-uniform lengths.
pub fn sampled_ap(w: &dyn LineWeight, sigma: &dyn LineWeight, p: f64, samples: usize, seed: u64) -> f64 {
    let (lo, hi) = w.window();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sup: f64 = 0.0;
    for _ in 0..samples {
        let (a, b) = sample_interval(&mut rng, lo, hi, 4.0);
        let len = b - a;
        sup = sup.max(w.integral(a, b) / len * (sigma.integral(a, b) / len).powf(p - 1.0));
    }
    sup
}

/// Lower bound for `sup w(2I)/w(I)` over random intervals whose doubles fit the window.
pub fn sampled_doubling(w: &dyn LineWeight, samples: usize, seed: u64) -> f64 {
    let (lo, hi) = w.window();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sup: f64 = 1.0;
    for _ in 0..samples {
        let (a, b) = sample_interval(&mut rng, lo, hi, 4.0);
        let len = b - a;
        let (a2, b2) = (a - 0.5 * len, b + 0.5 * len);
        if a2 < lo || b2 > hi {
            continue;
        }
        sup = sup.max(w.integral(a2, b2) / w.integral(a, b));
    }
    sup
}

#[derive(Clone, Debug, Serialize)]
pub struct PoissonProbe {
    pub lambda_re: f64,
    pub lambda_im: f64,
    /// `∫ (Im λ)^{p-1} / |x - λ|^p w(x) dx`
    pub value: f64,
    /// Plain average over `[Re λ - Im λ, Re λ + Im λ]`.
    pub avg: f64,
    pub ratio: f64,
    pub converged: bool,
}

/// Poisson-type average against the plain average. With `x = Re λ + Im λ · tan θ` the
/// kernel becomes `cos^{p-2} θ dθ` on `(-π/2, π/2)`.
pub fn poisson_vs_average(w: &dyn LineWeight, lambda_re: f64, lambda_im: f64, p: f64) -> Result<PoissonProbe> {
    if !(lambda_im > 0.0) {
        return Err(LabError::Param("Im λ must be positive".into()));
    }
    if !(p > 1.0) {
        return Err(LabError::Param(format!("p = {p} must exceed 1")));
    }
    let f = |th: f64| {
        let c = th.cos();
        if c <= 1e-12 {
            return 0.0;
        }
        c.powf(p - 2.0) * w.value(lambda_re + lambda_im * th.tan())
    };
    let edge = 0.5 * PI - 1e-12;
    let pieces = 64;
    let h = 2.0 * edge / pieces as f64;
    let mut acc = Kahan::new();
    let mut converged = true;
    for k in 0..pieces {
        let a = -edge + k as f64 * h;
        let q = adaptive_simpson(&f, a, a + h, 1e-10, 40);
        converged &= q.converged;
        acc.add(q.value);
    }
    let value = acc.value();
    let avg = w.integral(lambda_re - lambda_im, lambda_re + lambda_im) / (2.0 * lambda_im);
    Ok(PoissonProbe { lambda_re, lambda_im, value, avg, ratio: value / avg, converged })
}

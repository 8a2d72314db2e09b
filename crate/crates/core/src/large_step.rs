//! Power-like weights on the comb `{J_1, J_2, …}` with hyperbola truncation, and the
//! Haar-multiplier / Haar-shift test pairs and damage forms.

use std::f64::consts::E;

use serde::Serialize;

use crate::appendix::{lower_hyperbola_solve, HyperbolaSplit};
use crate::characteristics::{ap_dyadic_components, weighted_norm_components, ApDyadic};
use crate::error::{LabError, Result};
use crate::numeric::Kahan;
use crate::tree::{dag_eval, AdaptiveTree, Node, Quad, Step, DEFAULT_DEPTH_CAP, F, G, P, SIGMA, W};

/// Normalising constant in the rule choosing `N`.
pub const C0: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Mult,
    Shift,
}

impl std::str::FromStr for Variant {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mult" => Ok(Variant::Mult),
            "shift" => Ok(Variant::Shift),
            _ => Err(LabError::Param(format!("unknown variant `{s}` (mult|shift)"))),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LargeStepParams {
    pub p: f64,
    pub m: f64,
    pub beta: f64,
    /// Least `N` with `Σ_{n=0}^{N} 2^{n(β-1)} ≥ M / C0`.
    pub n: u32,
    pub c0: f64,
    pub cap: u32,
}

impl LargeStepParams {
    pub fn new(p: f64, m: f64) -> Result<Self> {
        Self::with_cap(p, m, DEFAULT_DEPTH_CAP)
    }

    pub fn with_cap(p: f64, m: f64, cap: u32) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(LabError::Param(format!("p = {p} must exceed 1")));
        }
        if !(m > 2.0) || !m.is_finite() {
            return Err(LabError::Param(format!("M = {m} must exceed 2")));
        }
        let beta = 1.0 - 1.0 / (2.0 * m * E);
        let q = 2f64.powf(beta - 1.0);
        let target = m / C0;
        let mut sum = 0.0;
        let mut n = 0u32;
        let mut term = 1.0;
        loop {
            sum += term;
            if sum >= target {
                break;
            }
            n += 1;
            term *= q;
        }
        if n + 2 > cap {
            return Err(LabError::DepthCap { interval: format!("I_{}", n + 2), cap });
        }
        Ok(LargeStepParams { p, m, beta, n, c0: C0, cap })
    }

    pub fn p_prime(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    /// `w` on `J_n`.
    pub fn w_on_j(&self, n: u32) -> f64 {
        2f64.powf(n as f64 * self.beta)
    }

    /// Averages of the untruncated `(w, σ)` over `I_{N+1}`.
    pub fn tail_averages(&self) -> (f64, f64) {
        let n = self.n as f64;
        let qw = 2f64.powf(self.beta - 1.0);
        let x = 2f64.powf(n + 1.0) * qw.powf(n + 2.0) / (1.0 - qw);
        let qs = 2f64.powf(-1.0 - self.beta / (self.p - 1.0));
        let y = 2f64.powf(n + 1.0) * qs.powf(n + 2.0) / (1.0 - qs);
        (x, y)
    }
}

/// The truncated weights: values on `J_1, …, J_{N+1}` and the two tail cells.
#[derive(Clone, Debug, Serialize)]
pub struct LargeStepWeights {
    pub params: LargeStepParams,
    pub j_values: Vec<f64>,
    pub tail_x: f64,
    pub tail_y: f64,
    pub split: HyperbolaSplit,
    /// `(a, b)` placed on `J_{N+2}`; the smaller `a`.
    pub on_j: (f64, f64),
    /// `(a, b)` placed on `I_{N+2}`.
    pub on_i: (f64, f64),
}

pub fn build_weights(params: &LargeStepParams) -> Result<LargeStepWeights> {
    let j_values = (1..=params.n + 1).map(|n| params.w_on_j(n)).collect();
    let (x, y) = params.tail_averages();
    let split = lower_hyperbola_solve(x, y, params.p)?;
    let (lo, hi) =
        if split.a1 <= split.a2 { ((split.a1, split.b1), (split.a2, split.b2)) } else { ((split.a2, split.b2), (split.a1, split.b1)) };
    Ok(LargeStepWeights { params: params.clone(), j_values, tail_x: x, tail_y: y, split, on_j: lo, on_i: hi })
}

impl LargeStepWeights {
    fn sigma(&self, w: f64) -> f64 {
        w.powf(-1.0 / (self.params.p - 1.0))
    }

    /// Full quad with the test pair of the given variant.
    pub fn quad(&self, variant: Variant) -> Result<Quad> {
        let n = self.params.n;
        let (aj, bj) = self.on_j;
        let (ai, bi) = self.on_i;
        let tail_f = match variant {
            Variant::Mult => (if (n + 1).is_multiple_of(2) { 1.0 } else { -1.0 }) / 3.0,
            Variant::Shift => 0.0,
        };
        let mut node = Node::branch(Node::leaf(vec![ai, bi, tail_f, -ai]), Node::leaf(vec![aj, bj, tail_f, -aj]));
        for k in (1..=n + 1).rev() {
            let w = self.j_values[(k - 1) as usize];
            let s = self.sigma(w);
            let j = match variant {
                Variant::Mult => {
                    let f = if k % 2 == 1 { 1.0 } else { -1.0 };
                    Node::leaf(vec![w, s, f, -w])
                }
                Variant::Shift => Node::branch(Node::leaf(vec![w, s, -1.0, -w]), Node::leaf(vec![w, s, 1.0, -w])),
            };
            node = Node::branch(node, j);
        }
        Quad::new(self.params.p, AdaptiveTree::new(node, self.params.cap.max(n + 3))?)
    }
}

/// `Σ |I| |𝚫_I 𝐟| |𝚫_I 𝐠|` over all nodes.
pub fn damage_mult(tree: &AdaptiveTree, cf: usize, cg: usize) -> f64 {
    let flat = tree.flat();
    let m = flat.masses();
    let mut acc = Kahan::new();
    for (i, n) in flat.nodes.iter().enumerate() {
        if !n.is_leaf() {
            acc.add(m[i] * (n.haar_of(cf) * n.haar_of(cg)).abs());
        }
    }
    acc.value()
}

/// `Σ |I| 𝚫_I 𝐠 (𝚫_{I₊} 𝐟 - 𝚫_{I₋} 𝐟)` over all nodes.
pub fn damage_shift(tree: &AdaptiveTree, cf: usize, cg: usize) -> f64 {
    let flat = tree.flat();
    let m = flat.masses();
    let mut acc = Kahan::new();
    for (i, n) in flat.nodes.iter().enumerate() {
        if let Some((l, r)) = n.children() {
            acc.add(m[i] * n.haar_of(cg) * (r.haar_of(cf) - l.haar_of(cf)));
        }
    }
    acc.value()
}

fn truncated(tree: &AdaptiveTree, gens: u32, local: impl Fn(&Node) -> f64) -> f64 {
    dag_eval(
        (P(tree.root.clone()), gens),
        |(p, r)| match p.0.children() {
            Some((l, rt)) if *r > 0 => Step::Split((P(l.clone()), r - 1), (P(rt.clone()), r - 1)),
            _ => Step::Done(0.0),
        },
        |(p, _), a, b| local(&p.0) + 0.5 * (a + b),
    )
}

/// Multiplier damage restricted to generations `< gens`.
pub fn damage_mult_truncated(tree: &AdaptiveTree, cf: usize, cg: usize, gens: u32) -> f64 {
    truncated(tree, gens, |n| (n.haar_of(cf) * n.haar_of(cg)).abs())
}

/// Shift damage restricted to generations `< gens`.
pub fn damage_shift_truncated(tree: &AdaptiveTree, cf: usize, cg: usize, gens: u32) -> f64 {
    truncated(tree, gens, |n| match n.children() {
        Some((l, r)) => n.haar_of(cg) * (r.haar_of(cf) - l.haar_of(cf)),
        None => 0.0,
    })
}

pub fn damage(q: &Quad, variant: Variant) -> f64 {
    match variant {
        Variant::Mult => damage_mult(&q.tree, F, G),
        Variant::Shift => damage_shift(&q.tree, F, G),
    }
}

/// `(‖f‖_{L^p(σ)}, ‖g‖_{L^{p'}(w)})` with `f = 𝐟/σ`, `g = 𝐠/w`.
pub fn quad_norms(q: &Quad) -> Result<(f64, f64)> {
    Ok((weighted_norm_components(&q.tree, F, SIGMA, q.p)?, weighted_norm_components(&q.tree, G, W, q.p_prime())?))
}

#[derive(Clone, Debug, Serialize)]
pub struct LargeStepReport {
    pub params: LargeStepParams,
    pub variant: Variant,
    pub tail_x: f64,
    pub tail_y: f64,
    pub on_j: (f64, f64),
    pub on_i: (f64, f64),
    pub w_total: f64,
    pub ap: ApDyadic,
    pub ap_window: (f64, f64),
    pub hyperbola_defect: f64,
    pub damage: f64,
    pub f_norm: f64,
    pub g_norm: f64,
    pub normalized_damage: f64,
    pub min_jensen: f64,
    pub comb_haar_negative: bool,
}

impl LargeStepReport {
    pub fn window_ok(&self) -> bool {
        self.ap.value >= self.ap_window.0 && self.ap.value <= self.ap_window.1
    }
}

pub fn large_step_report(params: &LargeStepParams, variant: Variant) -> Result<(Quad, LargeStepReport)> {
    let weights = build_weights(params)?;
    let q = weights.quad(variant)?;
    let ap = ap_dyadic_components(&q.tree, W, SIGMA, q.p)?;
    let (f_norm, g_norm) = quad_norms(&q)?;
    let d = damage(&q, variant);
    let flat = q.tree.flat();
    let min_jensen = flat.nodes.iter().map(|n| n.avg()[W] * n.avg()[SIGMA].powf(q.p - 1.0)).fold(f64::INFINITY, f64::min);
    let mut neg = true;
    let mut node = &q.tree.root;
    for _ in 0..=params.n + 1 {
        neg &= node.haar_of(W) < 0.0;
        node = node.left_or_self();
    }
    let report = LargeStepReport {
        params: params.clone(),
        variant,
        tail_x: weights.tail_x,
        tail_y: weights.tail_y,
        on_j: weights.on_j,
        on_i: weights.on_i,
        w_total: q.tree.root.avg()[W],
        ap,
        ap_window: (params.m, 4.0 * params.m * E),
        hyperbola_defect: q.hyperbola_defect(),
        damage: d,
        f_norm,
        g_norm,
        normalized_damage: d / (f_norm * g_norm),
        min_jensen,
        comb_haar_negative: neg,
    };
    Ok((q, report))
}

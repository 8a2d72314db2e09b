//! Hilbert-transform pairings of compactly supported step functions on the line.
//!
//! Convention: `H g(x) = (1/π) p.v. ∫ g(y) / (y - x) dy`, so that
//! `H(h_{[0,1)})(x) = (1/π) ln(4|x(x-1)| / (2x-1)^2)`. With this choice the constant
//! `c = -⟨H(h_{[0,1)}), h_{[1/2,1)}⟩` is positive. The opposite kernel sign only flips
//! every pairing.
//!
//! Writing `F = Σ α_u 1_{[u,∞)}` and `G = Σ β_v 1_{[v,∞)}` in terms of their jumps,
//! two integrations by parts give `⟨H(G), F⟩ = -(1/π) Σ α_u β_v Λ(v - u)` with
//! `Λ(t) = t ln|t| - t`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::numeric::{adaptive_simpson, Kahan};
use crate::tree::AdaptiveTree;

/// Sign applied to the `1/(x-y)` kernel to obtain the convention used here.
pub const KERNEL_SIGN: f64 = -1.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepFunctionR {
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

impl StepFunctionR {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.len() != values.len() + 1 {
            return Err(LabError::Param("need one more breakpoint than values".into()));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(LabError::Param("breakpoints must be strictly increasing".into()));
        }
        if breakpoints.iter().chain(&values).any(|x| !x.is_finite()) {
            return Err(LabError::Param("non-finite breakpoint or value".into()));
        }
        Ok(StepFunctionR { breakpoints, values })
    }

    pub fn zero() -> Self {
        StepFunctionR { breakpoints: vec![0.0], values: vec![] }
    }

    pub fn indicator(a: f64, b: f64) -> Self {
        Self::new(vec![a, b], vec![1.0]).unwrap()
    }

    /// `h` on `[a,b)`: -1 on the left half, +1 on the right half.
    pub fn haar(a: f64, b: f64) -> Self {
        Self::new(vec![a, 0.5 * (a + b), b], vec![-1.0, 1.0]).unwrap()
    }

    /// Component `c` of a tree as a function on `[0,1)`.
    pub fn from_tree(tree: &AdaptiveTree, c: usize, limit: usize) -> Result<Self> {
        let leaves = tree.leaves(limit)?;
        let mut bps = Vec::with_capacity(leaves.len() + 1);
        let mut vals: Vec<f64> = Vec::with_capacity(leaves.len());
        for cell in &leaves {
            let v = cell.values[c];
            if let Some(&last) = vals.last() {
                if last == v {
                    continue;
                }
            }
            bps.push(cell.interval.start());
            vals.push(v);
        }
        bps.push(1.0);
        Self::new(bps, vals)
    }

    pub fn support(&self) -> (f64, f64) {
        (self.breakpoints[0], *self.breakpoints.last().unwrap())
    }

    pub fn eval(&self, x: f64) -> f64 {
        let b = &self.breakpoints;
        if self.values.is_empty() || x < b[0] || x >= *b.last().unwrap() {
            return 0.0;
        }
        let k = b.partition_point(|&t| t <= x) - 1;
        self.values[k]
    }

    /// `∫_{-∞}^{x}`.
    pub fn primitive(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for (k, v) in self.values.iter().enumerate() {
            let a = self.breakpoints[k];
            let b = self.breakpoints[k + 1];
            if x <= a {
                break;
            }
            acc += v * (x.min(b) - a);
        }
        acc
    }

    pub fn integral(&self, a: f64, b: f64) -> f64 {
        self.primitive(b) - self.primitive(a)
    }

    /// Jumps `(position, size)` with zero jumps dropped.
    pub fn jumps(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.breakpoints.len());
        let mut prev = 0.0;
        for (k, &x) in self.breakpoints.iter().enumerate() {
            let v = self.values.get(k).copied().unwrap_or(0.0);
            if v != prev {
                out.push((x, v - prev));
            }
            prev = v;
        }
        out
    }

    /// `x ↦ F((x - shift) / scale)` for `scale > 0`, or its mirror image for `scale < 0`.
    pub fn affine(&self, scale: f64, shift: f64) -> Self {
        let mut bps: Vec<f64> = self.breakpoints.iter().map(|x| shift + scale * x).collect();
        let mut vals = self.values.clone();
        if scale < 0.0 {
            bps.reverse();
            vals.reverse();
        }
        StepFunctionR { breakpoints: bps, values: vals }
    }

    pub fn scaled(&self, s: f64) -> Self {
        StepFunctionR { breakpoints: self.breakpoints.clone(), values: self.values.iter().map(|v| s * v).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut pts: Vec<f64> = self.breakpoints.iter().chain(&other.breakpoints).copied().collect();
        pts.sort_by(|a, b| a.total_cmp(b));
        pts.dedup();
        let vals: Vec<f64> = pts
            .windows(2)
            .map(|w| {
                let m = 0.5 * (w[0] + w[1]);
                self.eval(m) + other.eval(m)
            })
            .collect();
        StepFunctionR { breakpoints: pts, values: vals }
    }
}

/// `Λ(t) = t ln|t| - t`, `Λ(0) = 0`.
pub fn lambda(t: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        t * (t.abs().ln() - 1.0)
    }
}

/// Exact pairing from jump lists: `⟨H(G), F⟩` with `F` given by `fj`, `G` by `gj`.
pub fn pair_jumps(fj: &[(f64, f64)], gj: &[(f64, f64)]) -> f64 {
    let mut acc = Kahan::new();
    for &(u, a) in fj {
        let mut inner = Kahan::new();
        for &(v, b) in gj {
            inner.add(b * lambda(v - u));
        }
        acc.add(a * inner.value());
    }
    -acc.value() / PI
}

/// `⟨H(G), F⟩`, exact double sum.
pub fn pair(f: &StepFunctionR, g: &StepFunctionR) -> f64 {
    pair_jumps(&f.jumps(), &g.jumps())
}

const EXPANSION_ORDER: usize = 24;
const LEAF_SIZE: usize = 16;
const SEPARATION: f64 = 3.0;

struct Cluster {
    lo: usize,
    hi: usize,
    center: f64,
    radius: f64,
    /// `Σ α (e/r)^m` for `m = 0..=EXPANSION_ORDER`, `e = u - center`.
    moments: [f64; EXPANSION_ORDER + 1],
    kids: Option<(usize, usize)>,
}

/// Jumps of a step function organised for fast evaluation of `Σ_u α_u Λ(v - u)`.
pub struct JumpTree {
    xs: Vec<f64>,
    ws: Vec<f64>,
    nodes: Vec<Cluster>,
}

impl JumpTree {
    pub fn new(jumps: &[(f64, f64)]) -> Self {
        let mut j: Vec<(f64, f64)> = jumps.to_vec();
        j.sort_by(|a, b| a.0.total_cmp(&b.0));
        let xs: Vec<f64> = j.iter().map(|p| p.0).collect();
        let ws: Vec<f64> = j.iter().map(|p| p.1).collect();
        let mut t = JumpTree { xs, ws, nodes: Vec::new() };
        if !t.xs.is_empty() {
            t.build(0, t.xs.len());
        }
        t
    }

    fn build(&mut self, lo: usize, hi: usize) -> usize {
        let center = 0.5 * (self.xs[lo] + self.xs[hi - 1]);
        let radius = 0.5 * (self.xs[hi - 1] - self.xs[lo]);
        let mut moments = [0.0; EXPANSION_ORDER + 1];
        for k in lo..hi {
            let e = if radius > 0.0 { (self.xs[k] - center) / radius } else { 0.0 };
            let mut pw = 1.0;
            for m in moments.iter_mut() {
                *m += self.ws[k] * pw;
                pw *= e;
            }
        }
        let id = self.nodes.len();
        self.nodes.push(Cluster { lo, hi, center, radius, moments, kids: None });
        if hi - lo > LEAF_SIZE {
            let mid = (lo + hi) / 2;
            let l = self.build(lo, mid);
            let r = self.build(mid, hi);
            self.nodes[id].kids = Some((l, r));
        }
        id
    }

    /// `Σ_u α_u Λ(v - u)`.
    pub fn potential(&self, v: f64) -> f64 {
        if self.nodes.is_empty() {
            return 0.0;
        }
        let mut acc = Kahan::new();
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            let c = &self.nodes[i];
            let t = v - c.center;
            if t.abs() >= SEPARATION * c.radius && t != 0.0 {
                let r = c.radius;
                let mut s = c.moments[0] * lambda(t) - c.moments[1] * r * t.abs().ln();
                if r > 0.0 {
                    let rho = r / t;
                    let mut pw = r * rho;
                    for m in 2..=EXPANSION_ORDER {
                        s += c.moments[m] * pw / (m * (m - 1)) as f64;
                        pw *= rho;
                    }
                }
                acc.add(s);
            } else if let Some((l, r)) = c.kids {
                stack.push(l);
                stack.push(r);
            } else {
                for k in c.lo..c.hi {
                    acc.add(self.ws[k] * lambda(v - self.xs[k]));
                }
            }
        }
        acc.value()
    }
}

const BUFFER: usize = 256;

/// Jump set that grows by appends, queried through `Σ α Λ(v - u)`.
/// Blocks are rebuilt by binary-counter merging so each jump is re-indexed `O(log n)` times.
#[derive(Default)]
pub struct GrowingJumps {
    blocks: Vec<(Vec<(f64, f64)>, JumpTree)>,
    buffer: Vec<(f64, f64)>,
}

impl GrowingJumps {
    pub fn new(jumps: &[(f64, f64)]) -> Self {
        let mut g = GrowingJumps::default();
        g.extend(jumps);
        g
    }

    pub fn len(&self) -> usize {
        self.buffer.len() + self.blocks.iter().map(|b| b.0.len()).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn extend(&mut self, jumps: &[(f64, f64)]) {
        self.buffer.extend_from_slice(jumps);
        if self.buffer.len() < BUFFER {
            return;
        }
        let mut block = std::mem::take(&mut self.buffer);
        while let Some(last) = self.blocks.last() {
            if last.0.len() > 2 * block.len() {
                break;
            }
            let (mut v, _) = self.blocks.pop().unwrap();
            v.append(&mut block);
            block = v;
        }
        let tree = JumpTree::new(&block);
        self.blocks.push((block, tree));
    }

    /// `Σ_u α_u Λ(v - u)` over all jumps.
    pub fn potential(&self, v: f64) -> f64 {
        let mut acc = Kahan::new();
        for (_, t) in &self.blocks {
            acc.add(t.potential(v));
        }
        for &(u, a) in &self.buffer {
            acc.add(a * lambda(v - u));
        }
        acc.value()
    }

    /// `⟨H(X), G⟩` where `X` is the accumulated step function and `G` has jumps `g`.
    pub fn hilbert_against(&self, g: &[(f64, f64)]) -> f64 {
        let mut acc = Kahan::new();
        for &(u, a) in g {
            acc.add(a * self.potential(u));
        }
        acc.value() / PI
    }
}

/// Multipole-accelerated `⟨H(G), F⟩`; relative error around `3^-25` per far cluster.
pub fn pair_jumps_fast(fj: &[(f64, f64)], gj: &[(f64, f64)]) -> f64 {
    let tree = JumpTree::new(fj);
    let mut acc = Kahan::new();
    for &(v, b) in gj {
        acc.add(b * tree.potential(v));
    }
    -acc.value() / PI
}

pub fn pair_fast(f: &StepFunctionR, g: &StepFunctionR) -> f64 {
    pair_jumps_fast(&f.jumps(), &g.jumps())
}

/// `H(h_{[0,1)})(x) = (1/π) ln(4|x(x-1)| / (2x-1)^2)`.
pub fn hilbert_of_haar(x: f64) -> f64 {
    (4.0 * (x * (x - 1.0)).abs() / (2.0 * x - 1.0).powi(2)).ln() / PI
}

/// `H(1_{[c,d)})(x) = (1/π) ln|(d-x)/(c-x)|`.
pub fn hilbert_of_indicator(c: f64, d: f64, x: f64) -> f64 {
    ((d - x) / (c - x)).abs().ln() / PI
}

/// `c = -⟨H(h_{[0,1)}), h_{[1/2,1)}⟩`.
pub fn constant_c() -> f64 {
    static C: OnceLock<f64> = OnceLock::new();
    *C.get_or_init(|| -pair(&StepFunctionR::haar(0.5, 1.0), &StepFunctionR::haar(0.0, 1.0)))
}

/// Integral over `[a,b]` of a function with integrable log singularities at both ends.
pub fn endpoint_singular_integral(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let g = |u: f64| {
        if u <= 0.0 || u >= 1.0 {
            return 0.0;
        }
        // measure from the nearer end so that x never rounds onto the singularity
        let x = if u < 0.5 {
            a + (b - a) * u * u * (3.0 - 2.0 * u)
        } else {
            let v = 1.0 - u;
            b - (b - a) * v * v * (3.0 - 2.0 * v)
        };
        let y = f(x) * (b - a) * 6.0 * u * (1.0 - u);
        if y.is_finite() {
            y
        } else {
            0.0
        }
    };
    let mut acc = Kahan::new();
    for k in 0..8 {
        let lo = k as f64 / 8.0;
        acc.add(adaptive_simpson(&g, lo, lo + 0.125, tol / 8.0, 50).value);
    }
    acc.value()
}

/// Quadrature oracle for `⟨H(1_{[c,d)}), 1_{[a,b)}⟩`.
pub fn quadrature_indicator_pair(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let mut cuts = vec![a, b];
    for s in [c, d] {
        if s > a && s < b {
            cuts.push(s);
        }
    }
    cuts.sort_by(|x, y| x.total_cmp(y));
    let f = |x: f64| hilbert_of_indicator(c, d, x);
    cuts.windows(2).map(|w| endpoint_singular_integral(&f, w[0], w[1], 1e-13)).sum()
}

/// Quadrature value of `c` against the explicit formula for `H(h_{[0,1)})`.
pub fn constant_c_quadrature() -> f64 {
    let lo = endpoint_singular_integral(&hilbert_of_haar, 0.5, 0.75, 1e-14);
    let hi = endpoint_singular_integral(&hilbert_of_haar, 0.75, 1.0, 1e-14);
    -(hi - lo)
}

/// `⟨H(Σ h_J), Σ h_{J₊}⟩` over disjoint equal-length intervals `[a, a+len)`.
pub fn lemma_b_form(starts: &[f64], len: f64) -> Result<f64> {
    if starts.is_empty() || !(len > 0.0) {
        return Err(LabError::Param("need a nonempty family of positive length".into()));
    }
    let mut s = starts.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    if s.windows(2).any(|w| w[1] < w[0] + len) {
        return Err(LabError::Param("intervals overlap".into()));
    }
    let mut fj = Vec::new();
    let mut gj = Vec::new();
    for &a in &s {
        let m = a + 0.5 * len;
        let q = a + 0.75 * len;
        gj.extend([(a, -1.0), (m, 2.0), (a + len, -1.0)]);
        fj.extend([(m, -1.0), (q, 2.0), (a + len, -1.0)]);
    }
    Ok(pair_jumps(&fj, &gj))
}

/// Left endpoints of the regular cells `ch^N([0,1))` minus the two boundary cells.
pub fn regular_cells(n: u32) -> Vec<f64> {
    let k = 1u64 << n;
    (1..k - 1).map(|j| j as f64 / k as f64).collect()
}

/// `a ↦ ⟨H(h_{[0,1)}), h_{[a, a+1/2)}⟩`.
pub fn monotone_profile(a: f64) -> f64 {
    pair(&StepFunctionR::haar(a, a + 0.5), &StepFunctionR::haar(0.0, 1.0))
}

#[derive(Clone, Debug, Serialize)]
pub struct HilbertLemmaReport {
    pub c: f64,
    pub c_quadrature: f64,
    pub antisymmetry_max: f64,
    pub quadrature_max_error: f64,
    pub sign_pairs_checked: usize,
    pub sign_pairs_ok: bool,
    pub form_b: Vec<(u32, f64, f64)>,
    pub form_b_ok: bool,
    pub profile_decreasing: bool,
    pub haar_transform_increasing: bool,
    pub haar_transform_concave: bool,
    pub haar_transform_symmetric: bool,
}

impl HilbertLemmaReport {
    pub fn pass(&self) -> bool {
        self.c > 0.0
            && (self.c - self.c_quadrature).abs() < 1e-8
            && self.antisymmetry_max < 1e-10
            && self.quadrature_max_error < 1e-8
            && self.sign_pairs_ok
            && self.form_b_ok
            && self.profile_decreasing
            && self.haar_transform_increasing
            && self.haar_transform_concave
            && self.haar_transform_symmetric
    }
}

fn random_step(rng: &mut ChaCha8Rng, cells: usize) -> StepFunctionR {
    let mut x = rng.gen::<f64>() * 4.0 - 2.0;
    let mut bps = vec![x];
    let mut vals = Vec::new();
    for _ in 0..cells {
        x += 0.05 + rng.gen::<f64>();
        bps.push(x);
        vals.push(rng.gen::<f64>() * 2.0 - 1.0);
    }
    StepFunctionR::new(bps, vals).unwrap()
}

/// The lemma checks: closed form against quadrature, antisymmetry, the sign inequality
/// for disjoint equal-length pairs, form (b) on regular cells and the profile shape.
pub fn verify_lemmas(seed: u64) -> HilbertLemmaReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = constant_c();
    let c_quadrature = constant_c_quadrature();

    let mut anti: f64 = 0.0;
    for _ in 0..20 {
        let f = random_step(&mut rng, 6);
        let g = random_step(&mut rng, 5);
        anti = anti.max((pair(&f, &g) + pair(&g, &f)).abs());
        anti = anti.max(pair(&f, &f).abs());
    }

    let mut quad_err: f64 = 0.0;
    for k in 0..20 {
        let a = rng.gen::<f64>() * 2.0;
        let b = a + 0.1 + rng.gen::<f64>();
        let (c0, d0) = if k % 4 == 0 {
            (b, b + 0.2 + rng.gen::<f64>())
        } else {
            let c0 = rng.gen::<f64>() * 3.0 - 0.5;
            (c0, c0 + 0.1 + rng.gen::<f64>())
        };
        let exact = pair(&StepFunctionR::indicator(a, b), &StepFunctionR::indicator(c0, d0));
        let q = quadrature_indicator_pair(a, b, c0, d0);
        quad_err = quad_err.max((exact - q).abs());
    }

    let mut sign_ok = true;
    let pairs = 50;
    for _ in 0..pairs {
        let len = 0.1 + rng.gen::<f64>() * 2.0;
        let a = rng.gen::<f64>() * 4.0 - 2.0;
        let gap = rng.gen::<f64>() * 3.0 * len;
        let b = if rng.gen::<bool>() { a + len + gap } else { a - len - gap };
        let (ip, jp) = (StepFunctionR::haar(a + 0.5 * len, a + len), StepFunctionR::haar(b + 0.5 * len, b + len));
        let s = pair(&jp, &StepFunctionR::haar(a, a + len)) + pair(&ip, &StepFunctionR::haar(b, b + len));
        sign_ok &= s < 0.0;
    }

    let mut form_b = Vec::new();
    let mut form_ok = true;
    for n in [3u32, 4, 5] {
        let cells = regular_cells(n);
        let len = 1.0 / (1u64 << n) as f64;
        let v = lemma_b_form(&cells, len).unwrap();
        let bound = -c * cells.len() as f64 * len;
        form_ok &= v <= bound + 1e-8;
        form_b.push((n, v, bound));
    }

    let grid: Vec<f64> = (0..=16).map(|k| 1.0 + 0.25 * k as f64).collect();
    let prof: Vec<f64> = grid.iter().map(|&a| monotone_profile(a)).collect();
    let profile_decreasing = prof.windows(2).all(|w| w[1] < w[0]);

    let xs: Vec<f64> = (0..=200).map(|k| 1.05 + (10.0 - 1.05) * k as f64 / 200.0).collect();
    let hs: Vec<f64> = xs.iter().map(|&x| hilbert_of_haar(x)).collect();
    let increasing = hs.windows(2).all(|w| w[1] > w[0]);
    let concave = hs.windows(3).all(|w| w[2] - 2.0 * w[1] + w[0] < 0.0);
    let symmetric = (1..100).all(|k| {
        let x = -3.0 + 7.0 * k as f64 / 100.0 + 1e-3;
        (hilbert_of_haar(1.0 - x) - hilbert_of_haar(x)).abs() < 1e-10
    });

    HilbertLemmaReport {
        c,
        c_quadrature,
        antisymmetry_max: anti,
        quadrature_max_error: quad_err,
        sign_pairs_checked: pairs,
        sign_pairs_ok: sign_ok,
        form_b,
        form_b_ok: form_ok,
        profile_decreasing,
        haar_transform_increasing: increasing,
        haar_transform_concave: concave,
        haar_transform_symmetric: symmetric,
    }
}

//! End-to-end constructions: the one-weight Hilbert example, the direct-sum comb,
//! two-valued weights and the reflected extension to the line.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::appendix::{nazarov_delta, nazarov_transfer_check, TransferCheck};
use crate::characteristics::{ap_dyadic_components, strong_dyadic_smoothness, ReflectedWeight};
use crate::dyadic::DyadicInterval;
use crate::error::{LabError, Result};
use crate::hilbert::{constant_c, pair_fast, pair_jumps, pair_jumps_fast, GrowingJumps, StepFunctionR};
use crate::large_step::{build_weights, damage_shift_truncated, quad_norms, LargeStepParams, Variant};
use crate::numeric::spearman;
use crate::remodel::{remodel_iterate, walk_starting_intervals, RemodelConfig, RemodelState, Schedule, Stepping, MIN_FREQUENCY};
use crate::report::Check;
use crate::small_step::{default_triangle_cap, small_step_report, SmallStepReport, WalkKind};
use crate::tree::{AdaptiveTree, Node, Quad, F, G, SIGMA, W};

/// Above this many jump products the pairing switches to the clustered evaluation.
const EXACT_PAIR_LIMIT: usize = 1 << 22;

fn pair_auto(fj: &[(f64, f64)], gj: &[(f64, f64)]) -> f64 {
    if fj.len() * gj.len() <= EXACT_PAIR_LIMIT {
        pair_jumps(fj, gj)
    } else {
        pair_jumps_fast(fj, gj)
    }
}

/// Grandchild averages minus the average, for components `F` and `G`.
pub fn second_differences(source: &Arc<Node>) -> ([f64; 4], [f64; 4]) {
    let mut vf = [0.0; 4];
    let mut vg = [0.0; 4];
    if source.is_leaf() {
        return (vf, vg);
    }
    let a = source.avg();
    for (j, gc) in source.grandchildren().iter().enumerate() {
        vf[j] = gc.avg()[F] - a[F];
        vg[j] = gc.avg()[G] - a[G];
    }
    (vf, vg)
}

/// Jumps of the contribution on `interval` at frequency `n`: the pattern `values` repeated on
/// every regular cell, zero on the two edge cells.
pub fn contribution_jumps(interval: &DyadicInterval, n: u32, values: &[f64; 4]) -> Vec<(f64, f64)> {
    if values.iter().all(|&v| v == 0.0) {
        return Vec::new();
    }
    let a = interval.start();
    let h = interval.len() / (1u64 << n) as f64;
    let q = h / 4.0;
    let cells = (1u64 << n) - 2;
    let mut out = Vec::with_capacity(4 * cells as usize + 1);
    let mut prev = 0.0;
    for t in 1..=cells {
        let base = a + t as f64 * h;
        for (j, &v) in values.iter().enumerate() {
            if v != prev {
                out.push((base + j as f64 * q, v - prev));
                prev = v;
            }
        }
    }
    if prev != 0.0 {
        out.push((a + (cells + 1) as f64 * h, -prev));
    }
    out
}

/// Explicit sums `A_f`, `A_g` of the contributions chosen so far, started from the averages.
pub struct CrossTerms {
    pub f: GrowingJumps,
    pub g: GrowingJumps,
}

impl CrossTerms {
    pub fn new(avg_f: f64, avg_g: f64) -> Self {
        let start = |a: f64| if a == 0.0 { GrowingJumps::default() } else { GrowingJumps::new(&[(0.0, a), (1.0, -a)]) };
        CrossTerms { f: start(avg_f), g: start(avg_g) }
    }

    /// `⟨H A_g, D f⟩ + ⟨H D g, A_f⟩`.
    pub fn cross(&self, df: &[(f64, f64)], dg: &[(f64, f64)]) -> f64 {
        self.g.hilbert_against(df) - self.f.hilbert_against(dg)
    }

    pub fn absorb(&mut self, df: &[(f64, f64)], dg: &[(f64, f64)]) {
        self.f.extend(df);
        self.g.extend(dg);
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FrequencyChoice {
    pub interval: DyadicInterval,
    pub step: u32,
    pub n: u32,
    /// `T_k` at the chosen frequency.
    pub t: f64,
    pub bound: f64,
    pub exhausted: bool,
    /// `|T_k|` for every frequency tried.
    pub tried: Vec<(u32, f64)>,
    #[serde(skip)]
    pub df: Vec<(f64, f64)>,
    #[serde(skip)]
    pub dg: Vec<(f64, f64)>,
}

/// Least `N` in `3, 6, 12, …` up to `budget` with `|T_k| ≤ bound`; on exhaustion the largest
/// `N` tried is kept and flagged.
pub fn select_frequency(
    cross: &CrossTerms,
    interval: &DyadicInterval,
    step: u32,
    source: &Arc<Node>,
    budget: u32,
    bound: f64,
) -> FrequencyChoice {
    let (vf, vg) = second_differences(source);
    let mut n = MIN_FREQUENCY;
    let mut tried = Vec::new();
    loop {
        let df = contribution_jumps(interval, n, &vf);
        let dg = contribution_jumps(interval, n, &vg);
        let t = if df.is_empty() && dg.is_empty() { 0.0 } else { cross.cross(&df, &dg) };
        tried.push((n, t.abs()));
        let ok = t.abs() <= bound;
        if ok || 2 * n > budget {
            return FrequencyChoice { interval: interval.clone(), step, n, t, bound, exhausted: !ok, tried, df, dg };
        }
        n *= 2;
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HilbertConfig {
    pub p: f64,
    pub m: f64,
    pub d: u32,
    pub steps: u32,
    /// Largest frequency tried.
    pub budget: u32,
    pub chase_bits: u32,
    /// Small-step depth cap; `None` picks the triangle default.
    pub cap: Option<u32>,
    pub leaf_limit: usize,
}

impl Default for HilbertConfig {
    fn default() -> Self {
        HilbertConfig { p: 2.0, m: 4.0, d: 2, steps: 2, budget: 14, chase_bits: 6, cap: None, leaf_limit: 1 << 24 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HilbertReport {
    pub config: HilbertConfig,
    pub small_step: SmallStepReport,
    pub odd_generation_haar: f64,
    pub c: f64,
    /// Haar-shift damage of the small-step output over generations `< 2K`.
    pub damage_truncated: f64,
    pub eps_prime: f64,
    pub f_norm: f64,
    pub g_norm: f64,
    pub starting_intervals: usize,
    pub frequency_histogram: BTreeMap<u32, usize>,
    pub exhausted: Vec<FrequencyChoice>,
    pub cross_sum: f64,
    pub cross_abs_sum: f64,
    pub main_by_step: Vec<f64>,
    pub main_term: f64,
    pub main_step1_bound: f64,
    pub pairing: f64,
    pub identity_error: f64,
    pub leftover_mass: f64,
    pub normalized: f64,
    pub ratio_to_m: f64,
}

impl HilbertReport {
    pub fn checks(&self) -> Vec<Check> {
        vec![
            Check::eq("odd_generation_haar", self.odd_generation_haar, 0.0),
            Check::ge("main_step1", -self.main_by_step[0], self.main_step1_bound - 1e-8),
            Check::ge("main_term", self.main_term, self.c * self.damage_truncated - 1e-6),
            Check::le("cross_abs_sum", self.cross_abs_sum, self.eps_prime),
            Check::le("identity_error", self.identity_error, 1e-6),
            Check::eq("exhausted", self.exhausted.len() as f64, 0.0),
        ]
    }
}

pub struct HilbertRun {
    pub source: Quad,
    pub state: RemodelState,
    pub choices: Vec<FrequencyChoice>,
    pub report: HilbertReport,
}

pub fn hilbert_example(cfg: &HilbertConfig) -> Result<HilbertRun> {
    if cfg.steps == 0 || cfg.budget < MIN_FREQUENCY {
        return Err(LabError::Param(format!("need steps >= 1 and budget >= {MIN_FREQUENCY}")));
    }
    let params = LargeStepParams::new(cfg.p, cfg.m)?;
    let q0 = build_weights(&params)?.quad(Variant::Shift)?;
    let (f_norm, g_norm) = quad_norms(&q0)?;
    let cap = cfg.cap.unwrap_or_else(|| default_triangle_cap(cfg.d));
    let (q1, small) = small_step_report(&q0, WalkKind::Triangle, cfg.d, cap)?;
    let source = &q1.tree;
    let c = constant_c();
    let k = cfg.steps;
    let damage_truncated = damage_shift_truncated(source, F, G, 2 * k);
    let eps_prime = 0.5 * c * damage_truncated;
    let rcfg = RemodelConfig { steps: k, chase_bits: cfg.chase_bits, stepping: Stepping::Grandchildren, ..RemodelConfig::default() };
    let root = source.root.avg();
    let mut cross = CrossTerms::new(root[F], root[G]);
    let mut choices: Vec<FrequencyChoice> = Vec::new();
    let mut main_by_step = vec![0.0; k as usize];
    walk_starting_intervals(source, &rcfg, usize::MAX, true, &mut |i, step, _chase, src| {
        let bound = 3.0 * eps_prime * i.len() / (8.0 * k as f64);
        let mut ch = select_frequency(&cross, i, step, src, cfg.budget, bound);
        if !ch.df.is_empty() && !ch.dg.is_empty() {
            main_by_step[step as usize - 1] += pair_auto(&ch.df, &ch.dg);
        }
        cross.absorb(&ch.df, &ch.dg);
        let n = ch.n;
        ch.df = Vec::new();
        ch.dg = Vec::new();
        choices.push(ch);
        Ok(n)
    })?;
    log::info!("hilbert: {} starting intervals selected", choices.len());
    let mut schedule = Schedule::uniform(MIN_FREQUENCY)?;
    for ch in choices.iter().filter(|c| c.n != MIN_FREQUENCY) {
        schedule.insert(ch.interval.clone(), ch.n)?;
    }
    let state = remodel_iterate(source, &schedule, &rcfg)?;
    let x = state.last_averaged();
    let fs = StepFunctionR::from_tree(x, F, cfg.leaf_limit)?;
    let gs = StepFunctionR::from_tree(x, G, cfg.leaf_limit)?;
    let pairing = pair_fast(&fs, &gs);
    let main_sum: f64 = main_by_step.iter().sum();
    let cross_sum: f64 = choices.iter().map(|c| c.t).sum();
    let cross_abs_sum: f64 = choices.iter().map(|c| c.t.abs()).sum();
    let mut frequency_histogram = BTreeMap::new();
    for ch in &choices {
        *frequency_histogram.entry(ch.n).or_insert(0) += 1;
    }
    let r = &source.root;
    let main_step1_bound = c * r.haar_of(G) * r.right_or_self().haar_of(F);
    let normalized = pairing.abs() / (f_norm * g_norm);
    let report = HilbertReport {
        config: cfg.clone(),
        odd_generation_haar: small.odd_generation_haar,
        small_step: small,
        c,
        damage_truncated,
        eps_prime,
        f_norm,
        g_norm,
        starting_intervals: choices.len(),
        frequency_histogram,
        exhausted: choices.iter().filter(|c| c.exhausted).cloned().collect(),
        cross_sum,
        cross_abs_sum,
        main_term: -main_sum,
        main_by_step,
        main_step1_bound,
        pairing,
        identity_error: (pairing - main_sum - cross_sum).abs(),
        leftover_mass: state.leftover_mass(),
        normalized,
        ratio_to_m: normalized / cfg.m,
    };
    Ok(HilbertRun { source: q1, state, choices, report })
}

/// A weight on `[0,1)` continued to `[-radius, radius + 1)`: translates on even cells,
/// reflections on odd cells.
#[derive(Clone, Debug)]
pub struct LineExtension {
    pub base: AdaptiveTree,
    pub mirrored: AdaptiveTree,
    pub radius: u32,
}

pub fn extend_to_line(base: &AdaptiveTree, radius: u32) -> Result<LineExtension> {
    if radius == 0 {
        return Err(LabError::Param("window radius must be positive".into()));
    }
    Ok(LineExtension { base: base.clone(), mirrored: base.mirror(), radius })
}

impl LineExtension {
    pub fn cell(&self, k: i64) -> &AdaptiveTree {
        if k.rem_euclid(2) == 0 {
            &self.base
        } else {
            &self.mirrored
        }
    }

    /// Largest `|⟨·⟩_{[k-2^{-j},k)} - ⟨·⟩_{[k,k+2^{-j})}|` over inner integer points `k`
    /// of the window, `j = 0..=depth`, all components.
    pub fn seam_defect(&self, depth: u32) -> Result<f64> {
        let r = self.radius as i64;
        let mut worst: f64 = 0.0;
        for k in (-r + 1)..=r {
            let (left, right) = (self.cell(k - 1), self.cell(k));
            for j in 0..=depth {
                let a = left.average(&DyadicInterval::from_big(j, (num_bigint::BigUint::from(1u8) << j) - 1u8)?)?;
                let b = right.average(&DyadicInterval::from_big(j, 0u8.into())?)?;
                for (x, y) in a.iter().zip(&b) {
                    worst = worst.max((x - y).abs());
                }
            }
        }
        Ok(worst)
    }

    /// Dyadic joint characteristic over all dyadic intervals of the window. Intervals longer
    /// than one are unions of whole cells, which all share the root averages.
    pub fn ap_dyadic(&self, cw: usize, cs: usize, p: f64) -> Result<f64> {
        let a = ap_dyadic_components(&self.base, cw, cs, p)?.value;
        let b = ap_dyadic_components(&self.mirrored, cw, cs, p)?.value;
        let r = self.base.root.avg();
        Ok(a.max(b).max(r[cw] * r[cs].powf(p - 1.0)))
    }

    /// `S^sd` over the window: inside cells, and across every seam.
    pub fn strong_smoothness(&self, c: usize) -> Result<f64> {
        let inner = strong_dyadic_smoothness(&self.base, c)?.max(strong_dyadic_smoothness(&self.mirrored, c)?);
        let mut seam: f64 = 1.0;
        for (left, right) in [(&self.base, &self.mirrored), (&self.mirrored, &self.base)] {
            let (mut a, mut b) = (&left.root, &right.root);
            loop {
                let (x, y) = (a.avg()[c], b.avg()[c]);
                seam = seam.max((x / y).max(y / x));
                if a.is_leaf() && b.is_leaf() {
                    break;
                }
                a = a.right_or_self();
                b = b.left_or_self();
            }
        }
        Ok(inner.max(seam))
    }

    pub fn to_step(&self, c: usize, limit: usize) -> Result<StepFunctionR> {
        Ok(ReflectedWeight::new(StepFunctionR::from_tree(&self.base, c, limit)?, self.radius)?.to_step())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SarasonConfig {
    pub p: f64,
    /// Copy `k` is built with `M = m_step · k`.
    pub m_step: f64,
    pub kmax: u32,
    pub hilbert: HilbertConfig,
}

impl Default for SarasonConfig {
    fn default() -> Self {
        SarasonConfig { p: 2.0, m_step: 4.0, kmax: 4, hilbert: HilbertConfig::default() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SarasonCopy {
    pub k: u32,
    pub m: f64,
    pub w_mass: f64,
    pub sigma_mass: f64,
    /// `⟨w̃⟩_{J_k}`, `⟨σ̃⟩_{J_k}` after normalisation.
    pub j_averages: (f64, f64),
    pub ap_copy: f64,
    pub s_sd: (f64, f64),
    pub normalized: f64,
    /// Normalised pairing of the rescaled copy inside the glued weights.
    pub ratio: f64,
    /// `ratio / k^{1/p'}`.
    pub ratio_scaled: f64,
    pub hilbert_pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SarasonReport {
    pub config: SarasonConfig,
    pub copies: Vec<SarasonCopy>,
    pub ap_glued: f64,
    pub s_sd_glued: (f64, f64),
    pub s_sd_copies: (f64, f64),
    /// `(5/4) · ap_glued`, the bound for the continuous characteristic given smoothness.
    pub transfer_bound: f64,
    pub spearman: f64,
}

impl SarasonReport {
    pub fn checks(&self) -> Vec<Check> {
        let mut out = Vec::new();
        for c in &self.copies {
            out.push(Check::eq(format!("w_average_J{}", c.k), c.j_averages.0, 1.0));
            out.push(Check::eq(format!("sigma_average_J{}", c.k), c.j_averages.1, 1.0));
            out.push(Check::flag(format!("hilbert_copy_{}", c.k), c.hilbert_pass));
        }
        let copy_ap = self.copies.iter().map(|c| c.ap_copy).fold(1.0, f64::max);
        out.push(Check::le("ap_glued", self.ap_glued, copy_ap * (1.0 + 1e-12)));
        out.push(Check::le("s_sd_glued_w", self.s_sd_glued.0, self.s_sd_copies.0 * (1.0 + 1e-12)));
        out.push(Check::le("s_sd_glued_sigma", self.s_sd_glued.1, self.s_sd_copies.1 * (1.0 + 1e-12)));
        out.push(Check::ge("spearman", self.spearman, 0.0));
        out
    }
}

pub struct SarasonRun {
    pub glued: AdaptiveTree,
    pub report: SarasonReport,
}

pub fn sarason_direct_sum(cfg: &SarasonConfig) -> Result<SarasonRun> {
    if cfg.kmax == 0 || cfg.kmax > 6 {
        return Err(LabError::Param(format!("kmax = {} must lie in 1..=6", cfg.kmax)));
    }
    let p = cfg.p;
    let pp = p / (p - 1.0);
    let mut copies = Vec::new();
    let mut trees = Vec::new();
    for k in 1..=cfg.kmax {
        let m = cfg.m_step * k as f64;
        let hc = HilbertConfig { p, m, ..cfg.hilbert.clone() };
        let run = hilbert_example(&hc).map_err(|e| LabError::Plan(format!("copy {k}: {e}")))?;
        let x = run.state.last_averaged();
        let (wm, sm) = (x.root.avg()[W], x.root.avg()[SIGMA]);
        // 𝐟 = fσ scales with σ and 𝐠 = g w with w, so f and g are unchanged
        let t = x.map_averages(|v| vec![v[W] / wm, v[SIGMA] / sm, v[F] / sm, v[G] / wm]);
        let ratio = run.report.normalized * sm.powf(-1.0 / pp) * wm.powf(-1.0 / p);
        copies.push(SarasonCopy {
            k,
            m,
            w_mass: wm,
            sigma_mass: sm,
            j_averages: (t.root.avg()[W], t.root.avg()[SIGMA]),
            ap_copy: ap_dyadic_components(&t, W, SIGMA, p)?.value,
            s_sd: (strong_dyadic_smoothness(&t, W)?, strong_dyadic_smoothness(&t, SIGMA)?),
            normalized: run.report.normalized,
            ratio,
            ratio_scaled: ratio / (k as f64).powf(1.0 / pp),
            hilbert_pass: run.report.checks().iter().all(|c| c.pass),
        });
        trees.push(t);
    }
    // I_{k-1} = I_k ∪ J_k, with the constant tail on I_{kmax}
    let mut node = Node::leaf(vec![1.0, 1.0, 0.0, 0.0]);
    let mut height = 0;
    for t in trees.iter().rev() {
        height = height.max(t.height()) + 1;
        node = Node::branch(node, t.root.clone());
    }
    let glued = AdaptiveTree::new(node, height.max(crate::tree::DEFAULT_DEPTH_CAP))?;
    let fold = |f: fn(&SarasonCopy) -> f64| copies.iter().map(f).fold(1.0, f64::max);
    let ap_glued = ap_dyadic_components(&glued, W, SIGMA, p)?.value;
    let report = SarasonReport {
        config: cfg.clone(),
        ap_glued,
        s_sd_glued: (strong_dyadic_smoothness(&glued, W)?, strong_dyadic_smoothness(&glued, SIGMA)?),
        s_sd_copies: (fold(|c| c.s_sd.0), fold(|c| c.s_sd.1)),
        transfer_bound: 1.25 * ap_glued,
        spearman: spearman(
            &copies.iter().map(|c| c.k as f64).collect::<Vec<_>>(),
            &copies.iter().map(|c| c.ratio_scaled).collect::<Vec<_>>(),
        ),
        copies,
    };
    Ok(SarasonRun { glued, report })
}

#[derive(Clone, Debug, Serialize)]
pub struct TwoValuedConfig {
    pub p: f64,
    pub q: f64,
    pub eps: f64,
    /// Small-step order; `None` derives it from `eps`.
    pub d: Option<u32>,
    pub n: u32,
    pub steps: u32,
    pub chase_bits: u32,
    pub radius: u32,
}

impl Default for TwoValuedConfig {
    fn default() -> Self {
        TwoValuedConfig { p: 2.0, q: 4.0, eps: 1.0, d: None, n: MIN_FREQUENCY, steps: 2, chase_bits: 30, radius: 2 }
    }
}

pub const MAX_TWO_VALUED_D: u32 = 64;

#[derive(Clone, Debug, Serialize)]
pub struct TwoValuedReport {
    pub config: TwoValuedConfig,
    pub split: crate::appendix::HyperbolaSplit,
    pub d: u32,
    pub delta: f64,
    pub seed_ap: f64,
    pub seed_s_dyadic: f64,
    pub small_step_frozen: f64,
    pub leftover_mass: f64,
    /// Distinct non-frozen values of `w` in the remodeled weight.
    pub values: Vec<f64>,
    pub ap: f64,
    pub ap_window: f64,
    pub ap_bound: f64,
    /// `S^sd` of `w`, `σ` for the averaged weight `X̃^K` on the window. The finite two-valued
    /// tree itself has neighbouring leaves `a1`, `a2`, so its own `S^sd` is `a1/a2`.
    pub s_sd: (f64, f64),
    pub seam_defect: f64,
}

impl TwoValuedReport {
    pub fn checks(&self) -> Vec<Check> {
        let q = self.config.q;
        let two = self.values.len() == 2 && self.values.contains(&self.split.a1) && self.values.contains(&self.split.a2);
        vec![
            Check::le("seed_ap_defect", (self.seed_ap - q).abs(), 1e-10 * q),
            Check::flag("two_values", two),
            Check::ge("ap_lower", self.ap, q * (1.0 - 1e-12)),
            Check::le("ap_upper", self.ap, self.ap_bound),
            Check::le("ap_window_defect", (self.ap_window - self.ap).abs(), 0.0),
            Check::le("s_sd_w", self.s_sd.0, 1.0 + self.config.eps),
            Check::le("s_sd_sigma", self.s_sd.1, 1.0 + self.config.eps),
            Check::le("seam_defect", self.seam_defect, 0.0),
        ]
    }
}

pub struct TwoValuedRun {
    pub seed: AdaptiveTree,
    pub state: RemodelState,
    pub extension: LineExtension,
    pub report: TwoValuedReport,
}

pub fn two_valued_weight(cfg: &TwoValuedConfig) -> Result<TwoValuedRun> {
    if !(cfg.q > 1.0) || !(cfg.eps > 0.0) {
        return Err(LabError::Param(format!("need Q > 1 and eps > 0 (Q = {}, eps = {})", cfg.q, cfg.eps)));
    }
    let p = cfg.p;
    let split = crate::appendix::lower_hyperbola_solve(cfg.q, 1.0, p)?;
    let seed = AdaptiveTree::new(Node::branch(Node::leaf(vec![split.a1, split.b1]), Node::leaf(vec![split.a2, split.b2])), 1)?;
    let seed_ap = ap_dyadic_components(&seed, W, SIGMA, p)?.value;
    let seed_s = crate::characteristics::dyadic_smoothness(&seed, W)?.max(crate::characteristics::dyadic_smoothness(&seed, SIGMA)?);
    let delta = (1.0 + cfg.eps).powf(1.0 / 3.0) - 1.0;
    let d = cfg.d.unwrap_or_else(|| (((seed_s - 1.0) / delta).ceil() as u32).clamp(1, MAX_TWO_VALUED_D));
    let small = crate::small_step::transform(&seed, WalkKind::Generic, d, crate::small_step::default_cap(d))?;
    let source = small.tree;
    let rcfg = RemodelConfig {
        steps: cfg.steps,
        chase_bits: cfg.chase_bits,
        stepping: Stepping::Grandchildren,
        cap: source.height() + cfg.steps * (cfg.n + 2) + cfg.chase_bits + crate::remodel::DEFAULT_REMODEL_CAP,
    };
    let state = remodel_iterate(&source, &Schedule::uniform(cfg.n)?, &rcfg)?;
    let values: Vec<f64> = state.tree.level_measures(W, true).into_iter().map(|(v, _)| v).collect();
    let ap = ap_dyadic_components(&state.tree, W, SIGMA, p)?.value;
    let ext = extend_to_line(state.last_averaged(), cfg.radius)?;
    let remodeled = extend_to_line(&state.tree, cfg.radius)?;
    let report = TwoValuedReport {
        config: cfg.clone(),
        split,
        d,
        delta,
        seed_ap,
        seed_s_dyadic: seed_s,
        small_step_frozen: small.frozen_measure,
        leftover_mass: state.leftover_mass(),
        values,
        ap,
        ap_window: remodeled.ap_dyadic(W, SIGMA, p)?,
        ap_bound: 2f64.powf(p) * 1.25 * cfg.q,
        s_sd: (ext.strong_smoothness(W)?, ext.strong_smoothness(SIGMA)?),
        seam_defect: remodeled.seam_defect(8)?,
    };
    Ok(TwoValuedRun { seed, state, extension: remodeled, report })
}

fn smooth_node(rng: &mut ChaCha8Rng, a: f64, depth: u32, tmax: f64, p: f64) -> Arc<Node> {
    if depth == 0 {
        return Node::leaf(vec![a, a.powf(1.0 / (1.0 - p))]);
    }
    let t = rng.gen_range(-tmax..=tmax);
    Node::branch(smooth_node(rng, a * (1.0 - t), depth - 1, tmax, p), smooth_node(rng, a * (1.0 + t), depth - 1, tmax, p))
}

/// Transfer-lemma spot check on a seeded smooth weight. Sibling ratios are kept below
/// `(1+δ)^{1/3}`, remodeling lifts that to `S^sd ≤ 1+δ`, and the reflected extension
/// is sampled on arbitrary intervals. The weight is truncated at generation 14; its
/// node averages are a subset of the full ones, so both hypotheses carry over.
pub fn transfer_example(p: f64, eps: f64, samples: usize, seed: u64) -> Result<TransferCheck> {
    if !(p > 1.0 && eps > 0.0) {
        return Err(LabError::Param(format!("need p > 1 and eps > 0 (p = {p}, eps = {eps})")));
    }
    let delta = nazarov_delta(eps);
    let d0 = (1.0 + delta).cbrt() - 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tree = AdaptiveTree::new(smooth_node(&mut rng, 1.0, 6, d0 / (2.0 + d0), p), 64)?;
    let state = remodel_iterate(&tree, &Schedule::uniform(MIN_FREQUENCY)?, &RemodelConfig::with_steps(2))?;
    let ext = extend_to_line(&state.last_averaged().expectation(14), 2)?;
    let (w, s) = (ext.to_step(0, 1 << 22)?, ext.to_step(1, 1 << 22)?);
    Ok(nazarov_transfer_check(&w, &s, p, ext.strong_smoothness(0)?, ext.ap_dyadic(0, 1, p)?, delta, eps, samples, seed))
}

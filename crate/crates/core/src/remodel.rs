//! Periodisations, averaged quasi-periodisations and iterated remodeling.
//!
//! Remodeling never materialises cells. Inside a starting interval of frequency `N`
//! every regular cell of `ch^N(I)` holds the same rescaled copy of the source, so the
//! periodisation skeleton is a DAG with `O(N)` distinct nodes: the two boundary spines
//! plus one shared interior node per level. Starting intervals whose subtree carries no
//! scheduled frequency are memoised on `(source node, step, chase depth)`.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};
use std::sync::Arc;

use num_bigint::BigUint;
use serde::Serialize;
use serde_json::Value;

use crate::dyadic::DyadicInterval;
use crate::error::{LabError, Result};
use crate::tree::{AdaptiveTree, Node, P};

pub const MIN_FREQUENCY: u32 = 3;
pub const DEFAULT_STEPS: u32 = 3;
/// Chasing of exceptional intervals stops once the remaining exceptional mass of a
/// chase is below `2^-DEFAULT_CHASE_BITS`.
pub const DEFAULT_CHASE_BITS: u32 = 30;
pub const DEFAULT_REMODEL_CAP: u32 = 4096;

/// How far below a regular stopping interval the next step starts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stepping {
    Grandchildren,
    Children,
}

impl Stepping {
    pub fn depth(self) -> u32 {
        match self {
            Stepping::Grandchildren => 2,
            Stepping::Children => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RemodelConfig {
    pub steps: u32,
    pub chase_bits: u32,
    pub stepping: Stepping,
    pub cap: u32,
}

impl Default for RemodelConfig {
    fn default() -> Self {
        RemodelConfig { steps: DEFAULT_STEPS, chase_bits: DEFAULT_CHASE_BITS, stepping: Stepping::Grandchildren, cap: DEFAULT_REMODEL_CAP }
    }
}

impl RemodelConfig {
    pub fn with_steps(steps: u32) -> Self {
        RemodelConfig { steps, ..Default::default() }
    }
}

/// Frequencies per starting interval, with an optional fallback.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Schedule {
    pub map: BTreeMap<DyadicInterval, u32>,
    pub default_n: Option<u32>,
}

impl Schedule {
    pub fn uniform(n: u32) -> Result<Self> {
        check_frequency(n)?;
        Ok(Schedule { map: BTreeMap::new(), default_n: Some(n) })
    }

    pub fn insert(&mut self, i: DyadicInterval, n: u32) -> Result<()> {
        check_frequency(n)?;
        self.map.insert(i, n);
        Ok(())
    }

    pub fn frequency(&self, i: Option<&DyadicInterval>) -> Result<u32> {
        if let Some(n) = i.and_then(|i| self.map.get(i)) {
            return Ok(*n);
        }
        self.default_n.ok_or_else(|| LabError::Frequency(i.map(|i| i.key()).unwrap_or_else(|| "(unscheduled region)".into())))
    }

    /// Schedule file: `{"g:idx": N, ...}`, optionally with `"default": N`.
    pub fn from_json(v: &Value) -> Result<Self> {
        let obj = v.as_object().ok_or_else(|| LabError::Param("schedule must be a JSON object".into()))?;
        let mut s = Schedule::default();
        for (k, n) in obj {
            let n = n
                .as_u64()
                .and_then(|n| u32::try_from(n).ok())
                .ok_or_else(|| LabError::Param(format!("frequency for `{k}` must be a positive integer")))?;
            if k == "default" {
                check_frequency(n)?;
                s.default_n = Some(n);
            } else {
                s.insert(k.parse()?, n)?;
            }
        }
        Ok(s)
    }

    pub fn to_json(&self) -> Value {
        let mut m = serde_json::Map::new();
        for (k, n) in &self.map {
            m.insert(k.key(), Value::from(*n));
        }
        if let Some(n) = self.default_n {
            m.insert("default".into(), Value::from(n));
        }
        Value::Object(m)
    }

    /// Whether a scheduled interval lies inside a regular cell of `ch^n(i)`.
    fn interior_hot(&self, i: &DyadicInterval, n: u32) -> bool {
        let last = (BigUint::from(1u32) << n) - 1u32;
        self.map.keys().any(|h| {
            if h.gen < i.gen + n || !i.contains(h) {
                return false;
            }
            let off = (&h.idx >> (h.gen - i.gen - n)) - (&i.idx << n);
            off != BigUint::from(0u32) && off != last
        })
    }

    /// Intervals containing (or equal to) a scheduled interval.
    fn hot_set(&self) -> HashSet<DyadicInterval> {
        let mut hot = HashSet::new();
        for i in self.map.keys() {
            let mut cur = Some(i.clone());
            while let Some(c) = cur {
                if !hot.insert(c.clone()) {
                    break;
                }
                cur = c.parent();
            }
        }
        hot
    }
}

fn check_frequency(n: u32) -> Result<()> {
    if n < MIN_FREQUENCY {
        return Err(LabError::Param(format!("frequency {n} is below the minimum {MIN_FREQUENCY}")));
    }
    if n > 62 {
        return Err(LabError::Param(format!("frequency {n} is too large")));
    }
    Ok(())
}

/// Descendant of a source node at relative depth `depth`, index `t` (leaves repeat).
pub fn source_descendant(s: &Arc<Node>, depth: u32, t: u64) -> Arc<Node> {
    let mut n = s;
    for l in (0..depth).rev() {
        n = if (t >> l) & 1 == 1 { n.right_or_self() } else { n.left_or_self() };
    }
    n.clone()
}

/// Complete tree of depth `depth` whose cell `t` is `leaf(t)`, with every internal
/// average either given or computed.
fn complete(
    depth: u32,
    avg_at: &dyn Fn(u32, u64) -> Option<Vec<f64>>,
    leaf: &mut dyn FnMut(u64) -> Result<Arc<Node>>,
) -> Result<Arc<Node>> {
    fn go(
        level: u32,
        depth: u32,
        t: u64,
        avg_at: &dyn Fn(u32, u64) -> Option<Vec<f64>>,
        leaf: &mut dyn FnMut(u64) -> Result<Arc<Node>>,
    ) -> Result<Arc<Node>> {
        if level == depth {
            return leaf(t);
        }
        let l = go(level + 1, depth, 2 * t, avg_at, leaf)?;
        let r = go(level + 1, depth, 2 * t + 1, avg_at, leaf)?;
        Ok(match avg_at(level, t) {
            Some(a) => Node::branch_with_avg(l, r, a),
            None => Node::branch(l, r),
        })
    }
    go(0, depth, 0, avg_at, leaf)
}

/// Periodisation skeleton of depth `n`: interior cells share `regular`, the two
/// boundary cells are `left` and `right`.
fn skeleton(n: u32, regular: Arc<Node>, left: Arc<Node>, right: Arc<Node>, avg: Option<&[f64]>) -> Arc<Node> {
    let mk = |a: Arc<Node>, b: Arc<Node>| match avg {
        Some(v) => Node::branch_with_avg(a, b, v.to_vec()),
        None => Node::branch(a, b),
    };
    let (mut l, mut r, mut c) = (left, right, regular);
    for _ in 1..n {
        l = mk(l, c.clone());
        r = mk(c.clone(), r);
        c = mk(c.clone(), c);
    }
    mk(l, r)
}

/// `Π_I^N f`: `2^N` rescaled copies of `f`.
pub fn periodise(f: &AdaptiveTree, n: u32) -> Result<AdaptiveTree> {
    if n == 0 {
        return Err(LabError::Param("frequency must be at least 1".into()));
    }
    if f.root.height() + n > f.cap {
        return Err(LabError::DepthCap { interval: format!("periodisation of frequency {n}"), cap: f.cap });
    }
    let mut c = f.root.clone();
    let avg = f.root.avg().to_vec();
    for _ in 0..n {
        c = Node::branch_with_avg(c.clone(), c, avg.clone());
    }
    AdaptiveTree::new(c, f.cap)
}

/// `E_{ch²(I)} f` as a depth-2 tree.
fn truncate2(s: &Arc<Node>, minus: Option<&[f64]>) -> Arc<Node> {
    let sub = |v: &[f64]| -> Vec<f64> {
        match minus {
            Some(m) => v.iter().zip(m).map(|(a, b)| a - b).collect(),
            None => v.to_vec(),
        }
    };
    let avg_of = |n: &Arc<Node>| sub(n.avg());
    let half = |h: &Arc<Node>| {
        let (a, b) = (h.left_or_self(), h.right_or_self());
        let (la, lb) = (Node::leaf(avg_of(a)), Node::leaf(avg_of(b)));
        match minus {
            Some(_) => Node::branch(la, lb),
            None => Node::branch_with_avg(la, lb, h.avg().to_vec()),
        }
    };
    let (l, r) = (half(s.left_or_self()), half(s.right_or_self()));
    match minus {
        Some(_) => Node::branch(l, r),
        None => Node::branch_with_avg(l, r, s.avg().to_vec()),
    }
}

/// `Δ²_I f = E_{ch²(I)} f − ⟨f⟩_I`.
pub fn second_diff(f: &AdaptiveTree) -> AdaptiveTree {
    let root = truncate2(&f.root, Some(f.root.avg()));
    AdaptiveTree { dim: f.dim, root, cap: f.cap.max(2) }
}

/// `QΠ̄_I^N f`: `E_{ch²(I)} f ∘ ψ` on regular cells, `⟨f⟩_I` on the two boundary cells.
pub fn quasi_periodise_avg(f: &AdaptiveTree, n: u32) -> Result<AdaptiveTree> {
    check_frequency(n)?;
    let avg = f.root.avg().to_vec();
    let edge = Node::leaf(avg.clone());
    let root = skeleton(n, truncate2(&f.root, None), edge.clone(), edge, Some(&avg));
    AdaptiveTree::new(root, f.cap.max(n + 2))
}

/// Largest defect of `QΠ̄^N f − ⟨f⟩ = QΠ̄^N(Δ² f)`.
pub fn quasi_periodisation_identity(f: &AdaptiveTree, n: u32) -> Result<f64> {
    let lhs = quasi_periodise_avg(f, n)?;
    let avg = f.root.avg().to_vec();
    let lhs = lhs.map_leaves(|v| v.iter().zip(&avg).map(|(a, b)| a - b).collect());
    let rhs = quasi_periodise_avg(&second_diff(f), n)?;
    lhs.max_abs_diff(&rhs)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Out {
    /// `F̃^k`.
    Full(u32),
    /// `X̃^k = E_{ch^s(𝒮^k)} F̃^k`.
    Averaged(u32),
    /// `Σ_{J ∈ Ŝ^k} D_J F`.
    Contribution(u32),
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct Key {
    src: P,
    step: u32,
    used: u32,
    out: Out,
}

struct Builder<'a> {
    sched: &'a Schedule,
    cfg: &'a RemodelConfig,
    hot: HashSet<DyadicInterval>,
    memo: HashMap<Key, Arc<Node>>,
    zero: Arc<Node>,
    frozen_zero: Arc<Node>,
    sources: HashSet<(P, u32)>,
}

impl<'a> Builder<'a> {
    fn new(sched: &'a Schedule, cfg: &'a RemodelConfig, dim: usize) -> Self {
        Builder {
            sched,
            cfg,
            hot: sched.hot_set(),
            memo: HashMap::new(),
            zero: Node::leaf(vec![0.0; dim]),
            frozen_zero: Node::frozen(vec![0.0; dim]),
            sources: HashSet::new(),
        }
    }

    fn hot(&self, i: Option<&DyadicInterval>) -> Option<DyadicInterval> {
        i.filter(|i| self.hot.contains(*i)).cloned()
    }

    /// Function on a starting interval of step `step` with source `s`.
    fn start(&mut self, i: Option<&DyadicInterval>, s: &Arc<Node>, step: u32, used: u32, out: Out) -> Result<Arc<Node>> {
        let k = match out {
            Out::Full(k) | Out::Averaged(k) | Out::Contribution(k) => k,
        };
        if step > k {
            return Ok(match out {
                Out::Full(_) => s.clone(),
                Out::Averaged(_) if s.is_leaf() => s.clone(),
                Out::Averaged(_) => Node::leaf(s.avg().to_vec()),
                Out::Contribution(_) => self.zero.clone(),
            });
        }
        if s.is_leaf() {
            return Ok(match out {
                Out::Contribution(_) => self.zero.clone(),
                _ => s.clone(),
            });
        }
        let hot = self.hot(i);
        let key = Key { src: P(s.clone()), step, used, out };
        if hot.is_none() {
            if let Some(n) = self.memo.get(&key) {
                return Ok(n.clone());
            }
        }
        let n = self.sched.frequency(i)?;
        self.sources.insert((P(s.clone()), n));
        let node = self.build_start(hot.as_ref(), s, step, used, n, out)?;
        if hot.is_none() {
            self.memo.insert(key, node.clone());
        }
        Ok(node)
    }

    fn build_start(&mut self, i: Option<&DyadicInterval>, s: &Arc<Node>, step: u32, used: u32, n: u32, out: Out) -> Result<Arc<Node>> {
        let depth = self.cfg.stepping.depth();
        let chase = used + n - 1;
        let avg = s.avg().to_vec();
        let span = 1u64 << n;
        let cell = |t: u64| i.map(|i| DyadicInterval { gen: i.gen + n, idx: (&i.idx << n) + BigUint::from(t) });
        let exceptional = |b: &mut Self, t: u64| -> Result<Arc<Node>> {
            if chase > b.cfg.chase_bits {
                return Ok(match out {
                    Out::Contribution(_) => b.frozen_zero.clone(),
                    _ => Node::frozen(avg.clone()),
                });
            }
            b.start(cell(t).as_ref(), s, step, chase, out)
        };
        let left = exceptional(self, 0)?;
        let right = exceptional(self, span - 1)?;
        let skel_avg = match out {
            Out::Contribution(_) => None,
            _ => Some(avg.as_slice()),
        };
        // interior cells are shared unless one of them carries a scheduled frequency
        let hot_interior = i.is_some_and(|i| self.sched.interior_hot(i, n));
        if !hot_interior {
            let regular = self.regular(None, s, step, depth, out)?;
            return Ok(skeleton(n, regular, left, right, skel_avg));
        }
        let i = i.expect("hot interior implies a tracked interval");
        let avg_at = |_: u32, _: u64| skel_avg.map(|a| a.to_vec());
        let mut leaf = |t: u64| -> Result<Arc<Node>> {
            if t == 0 {
                Ok(left.clone())
            } else if t == span - 1 {
                Ok(right.clone())
            } else {
                let c = DyadicInterval { gen: i.gen + n, idx: (&i.idx << n) + BigUint::from(t) };
                let c = self.hot(Some(&c));
                self.regular(c.as_ref(), s, step, depth, out)
            }
        };
        complete(n, &avg_at, &mut leaf)
    }

    /// Content of a regular stopping interval of step `step`.
    fn regular(&mut self, i: Option<&DyadicInterval>, s: &Arc<Node>, step: u32, depth: u32, out: Out) -> Result<Arc<Node>> {
        if let Out::Contribution(k) = out {
            if k == step {
                return Ok(match depth {
                    2 => truncate2(s, Some(s.avg())),
                    _ => {
                        let m = s.avg();
                        let d = |h: &Arc<Node>| Node::leaf(h.avg().iter().zip(m).map(|(a, b)| a - b).collect());
                        Node::branch(d(s.left_or_self()), d(s.right_or_self()))
                    }
                });
            }
        }
        let full = matches!(out, Out::Full(_) | Out::Averaged(_));
        let src = s.clone();
        let avg_at = move |level: u32, t: u64| full.then(|| source_descendant(&src, level, t).avg().to_vec());
        let mut leaf = |t: u64| -> Result<Arc<Node>> {
            let c = i.map(|i| DyadicInterval { gen: i.gen + depth, idx: (&i.idx << depth) + BigUint::from(t) });
            let c = self.hot(c.as_ref());
            self.start(c.as_ref(), &source_descendant(s, depth, t), step + 1, 0, out)
        };
        complete(depth, &avg_at, &mut leaf)
    }
}

/// Counts and masses of one remodeling step.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct StepCensus {
    pub step: u32,
    pub starting: f64,
    pub regular: f64,
    pub regular_mass: f64,
    pub leftover_mass: f64,
}

#[allow(clippy::too_many_arguments)]
fn census(
    sched: &Schedule,
    cfg: &RemodelConfig,
    hot: &HashSet<DyadicInterval>,
    memo: &mut HashMap<(P, u32, u32), Vec<StepCensus>>,
    i: Option<&DyadicInterval>,
    s: &Arc<Node>,
    step: u32,
    used: u32,
) -> Result<Vec<StepCensus>> {
    let k = cfg.steps as usize;
    let mut acc: Vec<StepCensus> = (1..=cfg.steps).map(|step| StepCensus { step, ..Default::default() }).collect();
    if step > cfg.steps {
        return Ok(acc);
    }
    let tracked = i.filter(|i| hot.contains(*i));
    let key = (P(s.clone()), step, used);
    if tracked.is_none() {
        if let Some(v) = memo.get(&key) {
            return Ok(v.clone());
        }
    }
    let n = sched.frequency(i)?;
    let depth = cfg.stepping.depth();
    let cell_mass = (-(n as f64)).exp2();
    let span = 1u64 << n;
    let e = (step - 1) as usize;
    acc[e].starting += 1.0;
    acc[e].regular += (span - 2) as f64;
    acc[e].regular_mass += (span - 2) as f64 * cell_mass;
    let chase = used + n - 1;
    let child = |t: u64| tracked.map(|i| DyadicInterval { gen: i.gen + n, idx: (&i.idx << n) + BigUint::from(t) });
    let add = |acc: &mut Vec<StepCensus>, sub: &[StepCensus], w: f64| {
        for j in 0..k {
            acc[j].starting += sub[j].starting;
            acc[j].regular += sub[j].regular;
            acc[j].regular_mass += w * sub[j].regular_mass;
            acc[j].leftover_mass += w * sub[j].leftover_mass;
        }
    };
    for t in [0, span - 1] {
        if chase > cfg.chase_bits {
            acc[e].leftover_mass += cell_mass;
        } else {
            let sub = census(sched, cfg, hot, memo, child(t).as_ref(), s, step, chase)?;
            add(&mut acc, &sub, cell_mass);
        }
    }
    if step < cfg.steps {
        let fan = 1u64 << depth;
        let sub_mass = cell_mass / fan as f64;
        let interior_hot = tracked.is_some_and(|i| sched.interior_hot(i, n));
        for t in 0..fan {
            let src = source_descendant(s, depth, t);
            if interior_hot {
                let i = tracked.expect("checked");
                for r in 1..span - 1 {
                    let c =
                        DyadicInterval { gen: i.gen + n + depth, idx: (((&i.idx << n) + BigUint::from(r)) << depth) + BigUint::from(t) };
                    let sub = census(sched, cfg, hot, memo, Some(&c), &src, step + 1, 0)?;
                    add(&mut acc, &sub, sub_mass);
                }
            } else {
                let sub = census(sched, cfg, hot, memo, None, &src, step + 1, 0)?;
                let reps = (span - 2) as f64;
                let scaled: Vec<StepCensus> = sub
                    .iter()
                    .map(|c| StepCensus {
                        step: c.step,
                        starting: reps * c.starting,
                        regular: reps * c.regular,
                        regular_mass: reps * c.regular_mass,
                        leftover_mass: reps * c.leftover_mass,
                    })
                    .collect();
                add(&mut acc, &scaled, sub_mass);
            }
        }
    }
    if tracked.is_none() {
        memo.insert(key, acc.clone());
    }
    Ok(acc)
}

/// Result of `K` remodeling steps.
#[derive(Clone, Debug)]
pub struct RemodelState {
    pub step: u32,
    pub config: RemodelConfig,
    pub schedule: Schedule,
    /// `F̃^K`.
    pub tree: AdaptiveTree,
    /// `X̃^0, …, X̃^K`.
    pub averaged: Vec<AdaptiveTree>,
    /// `Σ_{J ∈ Ŝ^k} D_J F` for `k = 1..=K`.
    pub contributions: Vec<AdaptiveTree>,
    pub census: Vec<StepCensus>,
    /// `max |X̃^k − X̃^{k−1} − Σ_{Ŝ^k} D_J F|` per step.
    pub decomposition_error: Vec<f64>,
    /// Largest defect of the quasi-periodisation identity over the emitted sources.
    pub identity_defect: f64,
}

pub const DECOMPOSITION_TOL: f64 = 1e-12;

pub fn remodel_iterate(input: &AdaptiveTree, schedule: &Schedule, cfg: &RemodelConfig) -> Result<RemodelState> {
    if cfg.steps == 0 {
        return Err(LabError::Param("remodeling needs at least one step".into()));
    }
    let unit = DyadicInterval::unit();
    let mut b = Builder::new(schedule, cfg, input.dim);
    let mk = |root: Arc<Node>| -> Result<AdaptiveTree> {
        if root.height() > cfg.cap {
            return Err(LabError::DepthCap { interval: format!("remodeled leaf at generation {}", root.height()), cap: cfg.cap });
        }
        AdaptiveTree::new(root, cfg.cap)
    };
    let tree = mk(b.start(Some(&unit), &input.root, 1, 0, Out::Full(cfg.steps))?)?;
    let mut averaged = vec![AdaptiveTree::constant(input.root.avg().to_vec())];
    let mut contributions = Vec::new();
    let mut decomposition_error = Vec::new();
    for k in 1..=cfg.steps {
        let x = mk(b.start(Some(&unit), &input.root, 1, 0, Out::Averaged(k))?)?;
        let d = mk(b.start(Some(&unit), &input.root, 1, 0, Out::Contribution(k))?)?;
        let diff = x.combine(&averaged[(k - 1) as usize], |a, b| a - b)?;
        let err = diff.max_abs_diff(&d)?;
        log::debug!("remodel step {k}: decomposition error {err:e}");
        decomposition_error.push(err);
        averaged.push(x);
        contributions.push(d);
    }
    let mut identity_defect = 0.0f64;
    let sources: Vec<(P, u32)> = b.sources.iter().cloned().collect();
    for (s, n) in sources.into_iter().take(256) {
        let t = AdaptiveTree::new(s.0.clone(), s.0.height().max(1))?;
        identity_defect = identity_defect.max(quasi_periodisation_identity(&t, n)?);
    }
    let hot = schedule.hot_set();
    let mut memo = HashMap::new();
    let census = census(schedule, cfg, &hot, &mut memo, Some(&unit), &input.root, 1, 0)?;
    Ok(RemodelState {
        step: cfg.steps,
        config: cfg.clone(),
        schedule: schedule.clone(),
        tree,
        averaged,
        contributions,
        census,
        decomposition_error,
        identity_defect,
    })
}

impl RemodelState {
    pub fn leftover_mass(&self) -> f64 {
        self.census.iter().fold(0.0, |a, c| a + c.leftover_mass)
    }

    pub fn decomposition_ok(&self) -> bool {
        self.decomposition_error.iter().all(|e| *e <= DECOMPOSITION_TOL)
    }

    /// `X̃^K`.
    pub fn last_averaged(&self) -> &AdaptiveTree {
        self.averaged.last().expect("X̃^0 is always present")
    }
}

/// Averages of `F̃` over `[0, 2^-j)` and `[1 − 2^-j, 1)` for `j = 0..=depth`.
pub fn boundary_averages(state: &RemodelState, depth: u32) -> Result<Vec<(DyadicInterval, Vec<f64>)>> {
    let tree = &state.tree;
    let mut out = Vec::new();
    for j in 0..=depth.min(tree.cap) {
        let left = DyadicInterval::i_n(j);
        let right = DyadicInterval { gen: j, idx: (BigUint::from(1u32) << j) - 1u32 };
        out.push((left.clone(), tree.average(&left)?));
        if j > 0 {
            out.push((right.clone(), tree.average(&right)?));
        }
    }
    Ok(out)
}

/// Largest deviation of the boundary averages from `⟨F⟩_{[0,1)}`.
pub fn boundary_defect(state: &RemodelState, depth: u32) -> Result<f64> {
    let mean = state.tree.root.avg().to_vec();
    let mut worst = 0.0f64;
    for (_, a) in boundary_averages(state, depth)? {
        for (x, m) in a.iter().zip(&mean) {
            worst = worst.max((x - m).abs());
        }
    }
    Ok(worst)
}

/// A starting interval in rank order.
#[derive(Clone, Debug)]
pub struct StartingInterval {
    pub interval: DyadicInterval,
    pub step: u32,
    pub frequency: u32,
    /// Accumulated chase depth `Σ (N − 1)` of the exceptional ancestors within the step.
    pub chase: u32,
    pub source: Arc<Node>,
}

impl StartingInterval {
    /// `D_J F` rescaled to `[0,1)`: `QΠ̄^N(Δ² source)` with the given frequency.
    pub fn contribution(&self, n: u32) -> Result<AdaptiveTree> {
        let t = AdaptiveTree::new(self.source.clone(), self.source.height().max(2))?;
        quasi_periodise_avg(&second_diff(&t), n)
    }
}

/// First `limit` starting intervals in the order `rk(I_0) ≤ rk(I_1) ≤ …` (ties left to
/// right). Intervals with a constant source are skipped when `skip_constant` is set.
pub fn starting_intervals(
    input: &AdaptiveTree,
    schedule: &Schedule,
    cfg: &RemodelConfig,
    limit: usize,
    skip_constant: bool,
) -> Result<Vec<StartingInterval>> {
    let mut out = Vec::new();
    walk_starting_intervals(input, cfg, limit, skip_constant, &mut |i, step, chase, source| {
        let n = schedule.frequency(Some(i))?;
        out.push(StartingInterval { interval: i.clone(), step, frequency: n, chase, source: source.clone() });
        Ok(n)
    })?;
    Ok(out)
}

/// `(interval, step, chase, source) -> N`
pub type FrequencyChooser<'a> = dyn FnMut(&DyadicInterval, u32, u32, &Arc<Node>) -> Result<u32> + 'a;

/// Visits starting intervals in rank order; `choose(interval, step, chase, source)` returns the frequency
/// the interval is remodeled with, which decides the intervals visited later. Returns the visit count.
pub fn walk_starting_intervals(
    input: &AdaptiveTree,
    cfg: &RemodelConfig,
    limit: usize,
    skip_constant: bool,
    choose: &mut FrequencyChooser<'_>,
) -> Result<usize> {
    struct Pending {
        step: u32,
        chase: u32,
        source: Arc<Node>,
    }
    let depth = cfg.stepping.depth();
    let mut heap: BinaryHeap<Reverse<(DyadicInterval, u64)>> = BinaryHeap::new();
    let mut pending: HashMap<u64, Pending> = HashMap::new();
    let mut next_id = 0u64;
    let mut push = |heap: &mut BinaryHeap<_>, pending: &mut HashMap<u64, Pending>, i: DyadicInterval, p: Pending| {
        if skip_constant && p.source.is_leaf() {
            return;
        }
        heap.push(Reverse((i, next_id)));
        pending.insert(next_id, p);
        next_id += 1;
    };
    push(&mut heap, &mut pending, DyadicInterval::unit(), Pending { step: 1, chase: 0, source: input.root.clone() });
    let mut visited = 0;
    while let Some(Reverse((i, id))) = heap.pop() {
        if visited >= limit {
            break;
        }
        let p = pending.remove(&id).expect("pending entry");
        let n = choose(&i, p.step, p.chase, &p.source)?;
        if !(MIN_FREQUENCY..=62).contains(&n) {
            return Err(LabError::Frequency(format!("{} chosen for {}", n, i)));
        }
        visited += 1;
        let span = 1u64 << n;
        let chase = p.chase + n - 1;
        if chase <= cfg.chase_bits {
            for t in [0, span - 1] {
                let c = DyadicInterval { gen: i.gen + n, idx: (&i.idx << n) + BigUint::from(t) };
                push(&mut heap, &mut pending, c, Pending { step: p.step, chase, source: p.source.clone() });
            }
        }
        if p.step < cfg.steps && !p.source.is_leaf() {
            for r in 1..span - 1 {
                for t in 0..(1u64 << depth) {
                    let c =
                        DyadicInterval { gen: i.gen + n + depth, idx: (((&i.idx << n) + BigUint::from(r)) << depth) + BigUint::from(t) };
                    push(
                        &mut heap,
                        &mut pending,
                        c,
                        Pending { step: p.step + 1, chase: 0, source: source_descendant(&p.source, depth, t) },
                    );
                }
            }
        }
    }
    Ok(visited)
}

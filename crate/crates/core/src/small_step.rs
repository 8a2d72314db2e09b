//! Stopping families of order `d` and the measure-preserving small-step transforms.
//!
//! Both transforms are built region by region. For a source node `S` the walk runs on a
//! finite state space, so the region subtree below a walk state depends only on the
//! state and the remaining depth budget; it is assembled layer by layer from the cap
//! upwards and shared wherever the walk revisits a state.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::Serialize;

use crate::characteristics::{ap_dyadic_components, dyadic_smoothness};
use crate::dyadic::DyadicInterval;
use crate::error::{LabError, Result};
use crate::large_step::{damage_mult, damage_shift, quad_norms};
use crate::tree::{dag_eval, AdaptiveTree, Node, Quad, Step, F, G, P, SIGMA, W};

/// Default depth budget per stopping region, in generations.
pub fn default_cap(d: u32) -> u32 {
    8 * d * d + 16
}

/// Default budget for the triangle walk, whose base leg is a slow one-dimensional walk.
pub fn default_triangle_cap(d: u32) -> u32 {
    32 * d * d + 16
}

pub fn default_cap_for(kind: WalkKind, d: u32) -> u32 {
    match kind {
        WalkKind::Generic => default_cap(d),
        WalkKind::Triangle => default_triangle_cap(d),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WalkKind {
    Generic,
    Triangle,
}

impl std::str::FromStr for WalkKind {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "generic" => Ok(WalkKind::Generic),
            "triangle" => Ok(WalkKind::Triangle),
            _ => Err(LabError::Param(format!("unknown variant `{s}` (generic|triangle)"))),
        }
    }
}

/// Walk state: `(s, 0)` for the generic walk, lattice point `(X, Y)` scaled by `2d`
/// for the triangle walk.
pub type State = (i32, i32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum StopClass {
    Minus,
    Plus,
    PlusPlus,
    PlusMinus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Place {
    Interior,
    Upper,
    Lower,
    Base,
}

#[derive(Clone, Copy, Debug)]
struct Walk {
    kind: WalkKind,
    d: i32,
}

impl Walk {
    /// Generations per step.
    fn stride(&self) -> u32 {
        match self.kind {
            WalkKind::Generic => 1,
            WalkKind::Triangle => 2,
        }
    }

    fn stop(&self, (x, y): State) -> Option<StopClass> {
        let d = self.d;
        match self.kind {
            WalkKind::Generic if x == -d => Some(StopClass::Minus),
            WalkKind::Generic if x == d => Some(StopClass::Plus),
            WalkKind::Generic => None,
            WalkKind::Triangle if x == -2 * d => Some(StopClass::Minus),
            WalkKind::Triangle if x == 2 * d && y == 2 * d => Some(StopClass::PlusPlus),
            WalkKind::Triangle if x == 2 * d && y == -2 * d => Some(StopClass::PlusMinus),
            WalkKind::Triangle => None,
        }
    }

    fn place(&self, (x, y): State) -> Place {
        let d2 = 2 * self.d;
        if x + d2 - 2 * y == 0 {
            Place::Upper
        } else if x + d2 + 2 * y == 0 {
            Place::Lower
        } else if x == d2 {
            Place::Base
        } else {
            Place::Interior
        }
    }

    /// Successor states of one step, one per child cell in left-to-right order
    /// (two for the generic walk, four grandchildren for the triangle walk).
    fn successors(&self, st: State) -> Vec<State> {
        let (x, y) = st;
        match self.kind {
            WalkKind::Generic => vec![(x - 1, 0), (x + 1, 0)],
            WalkKind::Triangle => match self.place(st) {
                Place::Interior => vec![(x - 2, y), (x - 2, y), (x + 2, y - 1), (x + 2, y + 1)],
                Place::Upper => vec![(x - 2, y - 1), (x - 2, y - 1), (x + 2, y + 1), (x + 2, y + 1)],
                Place::Lower => vec![(x - 2, y + 1), (x - 2, y + 1), (x + 2, y - 1), (x + 2, y - 1)],
                Place::Base => vec![(x, y - 1), (x, y - 1), (x, y + 1), (x, y + 1)],
            },
        }
    }

    fn steps(&self, cap: u32) -> u32 {
        cap / self.stride()
    }
}

/// Compressed record of a stopping family: stopped masses per relative generation,
/// the states frozen at the cap, and the total mass of strict ancestors of stopping
/// intervals. Masses are relative to `|I|`.
#[derive(Clone, Debug, Serialize)]
pub struct StoppingFamily {
    pub root: DyadicInterval,
    pub d: u32,
    pub cap: u32,
    pub kind: WalkKind,
    /// `𝒮₋` mass by relative generation.
    pub minus: Vec<f64>,
    /// `𝒮₊` (generic) or `𝒮₊₊` (triangle) mass by relative generation.
    pub plus: Vec<f64>,
    /// `𝒮₊₋` mass by relative generation (triangle only).
    pub plus_minus: Vec<f64>,
    pub leftover: Vec<(State, f64)>,
    pub intermediate_mass: f64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Classification {
    Outside,
    /// `J` lies in (or is) the stopping interval `stop` of the given class.
    Stopped {
        stop: DyadicInterval,
        class: StopClass,
    },
    /// `J` is a strict ancestor of stopping intervals; last full-step walk state.
    Intermediate(State),
    /// `J` lies in a cell frozen at the cap.
    Leftover {
        cell: DyadicInterval,
        state: State,
    },
}

fn start_state() -> State {
    (0, 0)
}

fn walk_for(kind: WalkKind, d: u32) -> Result<Walk> {
    if d == 0 {
        return Err(LabError::Param("d must be at least 1".into()));
    }
    Ok(Walk { kind, d: d as i32 })
}

fn family(root: &DyadicInterval, d: u32, cap: u32, kind: WalkKind) -> Result<StoppingFamily> {
    let walk = walk_for(kind, d)?;
    let steps = walk.steps(cap);
    let kids = walk.successors(start_state()).len();
    let share = 1.0 / kids as f64;
    let gens = (steps * walk.stride()) as usize + 1;
    let mut minus = vec![0.0; gens];
    let mut plus = vec![0.0; gens];
    let mut plus_minus = vec![0.0; gens];
    let mut dist: BTreeMap<State, f64> = BTreeMap::new();
    dist.insert(start_state(), 1.0);
    let mut intermediate = 0.0;
    for t in 0..steps {
        let mut next: BTreeMap<State, f64> = BTreeMap::new();
        for (&st, &m) in &dist {
            // a triangle step passes through the two odd-generation children
            intermediate += m * walk.stride() as f64;
            for s in walk.successors(st) {
                let g = ((t + 1) * walk.stride()) as usize;
                match walk.stop(s) {
                    Some(StopClass::Minus) => minus[g] += m * share,
                    Some(StopClass::Plus) | Some(StopClass::PlusPlus) => plus[g] += m * share,
                    Some(StopClass::PlusMinus) => plus_minus[g] += m * share,
                    None => *next.entry(s).or_insert(0.0) += m * share,
                }
            }
        }
        dist = next;
    }
    Ok(StoppingFamily {
        root: root.clone(),
        d,
        cap,
        kind,
        minus,
        plus,
        plus_minus,
        leftover: dist.into_iter().collect(),
        intermediate_mass: intermediate,
    })
}

/// Order-`d` stopping family of the `±1` walk driven by `h`.
pub fn stopping_family(root: &DyadicInterval, d: u32, cap: u32) -> Result<StoppingFamily> {
    family(root, d, cap, WalkKind::Generic)
}

/// Stopping family of the walk on the triangle with vertices `-e₁`, `e₁+e₂`, `e₁-e₂`.
pub fn triangle_stopping(root: &DyadicInterval, d: u32, cap: u32) -> Result<StoppingFamily> {
    family(root, d, cap, WalkKind::Triangle)
}

/// `Σ |K|/|I|` over strict ancestors of the stopping intervals (expected stopping time).
pub fn intermediate_mass(d: u32, cap: u32) -> Result<f64> {
    Ok(stopping_family(&DyadicInterval::unit(), d, cap)?.intermediate_mass)
}

impl StoppingFamily {
    fn walk(&self) -> Walk {
        Walk { kind: self.kind, d: self.d as i32 }
    }

    pub fn minus_mass(&self) -> f64 {
        self.minus.iter().fold(0.0, |a, m| a + m)
    }

    pub fn plus_mass(&self) -> f64 {
        self.plus.iter().fold(0.0, |a, m| a + m)
    }

    pub fn plus_minus_mass(&self) -> f64 {
        self.plus_minus.iter().fold(0.0, |a, m| a + m)
    }

    pub fn leftover_mass(&self) -> f64 {
        self.leftover.iter().fold(0.0, |a, (_, m)| a + m)
    }

    pub fn stopped_mass(&self) -> f64 {
        self.minus_mass() + self.plus_mass() + self.plus_minus_mass()
    }

    /// Locates `J` relative to the family.
    pub fn classify(&self, j: &DyadicInterval) -> Classification {
        if !self.root.contains(j) {
            return Classification::Outside;
        }
        let walk = self.walk();
        let stride = walk.stride();
        let steps = walk.steps(self.cap);
        let rel = j.gen - self.root.gen;
        let bit = |level: u32| j.step(self.root.gen + level);
        let mut st = start_state();
        let mut cell = self.root.clone();
        for t in 0..steps {
            if (t + 1) * stride > rel {
                return Classification::Intermediate(st);
            }
            let mut k = 0usize;
            for s in 0..stride {
                let b = bit(t * stride + s);
                k = 2 * k + b as usize;
                cell = cell.child(b);
            }
            st = walk.successors(st)[k];
            if let Some(class) = walk.stop(st) {
                return Classification::Stopped { stop: cell, class };
            }
        }
        Classification::Leftover { cell, state: st }
    }

    /// Explicit stopping intervals down to relative generation `max_gen`.
    pub fn enumerate(&self, max_gen: u32) -> Vec<(DyadicInterval, StopClass)> {
        let walk = self.walk();
        let stride = walk.stride();
        let steps = walk.steps(self.cap).min(max_gen / stride);
        let mut out = Vec::new();
        let mut stack = vec![(self.root.clone(), start_state(), 0u32)];
        while let Some((cell, st, t)) = stack.pop() {
            if t == steps {
                continue;
            }
            for (k, s) in walk.successors(st).into_iter().enumerate().rev() {
                let c = cell.descendant(stride, k as u64);
                match walk.stop(s) {
                    Some(class) => out.push((c, class)),
                    None => stack.push((c, s, t + 1)),
                }
            }
        }
        out.sort_by(|a, b| (a.0.gen, &a.0.idx).cmp(&(b.0.gen, &b.0.idx)));
        out
    }
}

fn add_scaled(base: &[f64], terms: &[(f64, &[f64])]) -> Vec<f64> {
    let mut v = base.to_vec();
    for (s, t) in terms {
        for (a, b) in v.iter_mut().zip(t.iter()) {
            *a += s * b;
        }
    }
    v
}

/// Builds one stopping region below a source node; `stops` supplies the subtree placed
/// on each stopping interval and `value` the running average at a walk state.
fn build_region(walk: Walk, cap: u32, value: impl Fn(State) -> Vec<f64>, stops: impl Fn(StopClass) -> Arc<Node>) -> Arc<Node> {
    let steps = walk.steps(cap);
    let mut layer: HashMap<State, Arc<Node>> = HashMap::new();
    // forward sweep: reachable states per step
    let mut reachable: Vec<Vec<State>> = Vec::with_capacity(steps as usize + 1);
    let mut cur = vec![start_state()];
    for _ in 0..=steps {
        reachable.push(cur.clone());
        let mut next: Vec<State> = cur.iter().flat_map(|&s| walk.successors(s)).filter(|&s| walk.stop(s).is_none()).collect();
        next.sort_unstable();
        next.dedup();
        cur = next;
    }
    let stop_nodes: HashMap<StopClass, Arc<Node>> = [StopClass::Minus, StopClass::Plus, StopClass::PlusPlus, StopClass::PlusMinus]
        .into_iter()
        .filter(|c| match walk.kind {
            WalkKind::Generic => matches!(c, StopClass::Minus | StopClass::Plus),
            WalkKind::Triangle => !matches!(c, StopClass::Plus),
        })
        .map(|c| (c, stops(c)))
        .collect();
    for t in (0..=steps).rev() {
        let mut next_layer: HashMap<State, Arc<Node>> = HashMap::with_capacity(reachable[t as usize].len());
        for &st in &reachable[t as usize] {
            let node = if t == steps {
                Node::frozen(value(st))
            } else {
                let kids: Vec<Arc<Node>> = walk
                    .successors(st)
                    .into_iter()
                    .map(|s| match walk.stop(s) {
                        Some(c) => stop_nodes[&c].clone(),
                        None => layer[&s].clone(),
                    })
                    .collect();
                match walk.kind {
                    WalkKind::Generic => Node::branch(kids[0].clone(), kids[1].clone()),
                    WalkKind::Triangle => Node::branch_with_avg(
                        Node::branch(kids[0].clone(), kids[1].clone()),
                        Node::branch(kids[2].clone(), kids[3].clone()),
                        value(st),
                    ),
                }
            };
            next_layer.insert(st, node);
        }
        layer = next_layer;
    }
    layer.remove(&start_state()).expect("start state is reachable")
}

#[derive(Clone, Debug)]
pub struct SmallStepOutput {
    pub tree: AdaptiveTree,
    pub kind: WalkKind,
    pub d: u32,
    pub cap: u32,
    /// Measure of cells frozen at the cap (including any frozen input cells).
    pub frozen_measure: f64,
    pub regions: usize,
}

/// `G∘Φ` for the generic order-`d` walk, iterated in every stopping interval.
pub fn small_step_transform(tree: &AdaptiveTree, d: u32, cap: u32) -> Result<SmallStepOutput> {
    let walk = walk_for(WalkKind::Generic, d)?;
    let mut regions = 0usize;
    let root = dag_eval(
        P(tree.root.clone()),
        |k| match k.0.children() {
            None => Step::Done(k.0.clone()),
            Some((l, r)) => Step::Split(P(l.clone()), P(r.clone())),
        },
        |k, a, b| {
            regions += 1;
            let avg = k.0.avg().to_vec();
            let delta = k.0.haar();
            let df = d as f64;
            build_region(
                walk,
                cap,
                |(s, _)| add_scaled(&avg, &[(s as f64 / df, &delta)]),
                |c| if c == StopClass::Minus { a.clone() } else { b.clone() },
            )
        },
    );
    finish(root, tree.cap, WalkKind::Generic, d, cap, regions)
}

fn finish(root: Arc<Node>, in_cap: u32, kind: WalkKind, d: u32, cap: u32, regions: usize) -> Result<SmallStepOutput> {
    let h = root.height();
    let tree = AdaptiveTree::new(root, in_cap.max(h))?;
    let frozen_measure = tree.frozen_measure();
    Ok(SmallStepOutput { tree, kind, d, cap, frozen_measure, regions })
}

/// Triangle variant: regions are built along the left spine; right stopping cells
/// receive the untouched grandchildren of the source.
pub fn small_step_triangle_transform(tree: &AdaptiveTree, d: u32, cap: u32) -> Result<SmallStepOutput> {
    let walk = walk_for(WalkKind::Triangle, d)?;
    let mut spine = Vec::new();
    let mut n = tree.root.clone();
    while let Some((l, r)) = n.children() {
        if let Some((rl, rr)) = r.children() {
            if !rl.is_leaf() || !rr.is_leaf() {
                return Err(LabError::Shape(format!(
                    "right child at spine depth {} must be a leaf or split once into leaves",
                    spine.len()
                )));
            }
        }
        spine.push(n.clone());
        n = l.clone();
    }
    let mut out = n;
    let d2 = 2.0 * d as f64;
    let regions = spine.len();
    for s in spine.into_iter().rev() {
        let (_, r) = s.children().unwrap();
        // anchored at ⟨F⟩_{S₊} so that cells with equal X agree exactly in w, σ, 𝐠
        let anchor = r.avg().to_vec();
        let delta = s.haar();
        let delta_r = r.haar();
        let (rl, rr) = (r.left_or_self().clone(), r.right_or_self().clone());
        let a = out.clone();
        out = build_region(
            walk,
            cap,
            |(x, y)| add_scaled(&anchor, &[((x as f64 - d2) / d2, &delta), (y as f64 / d2, &delta_r)]),
            |c| match c {
                StopClass::Minus => a.clone(),
                StopClass::PlusPlus => rr.clone(),
                _ => rl.clone(),
            },
        );
    }
    finish(out, tree.cap, WalkKind::Triangle, d, cap, regions)
}

pub fn transform(tree: &AdaptiveTree, kind: WalkKind, d: u32, cap: u32) -> Result<SmallStepOutput> {
    match kind {
        WalkKind::Generic => small_step_transform(tree, d, cap),
        WalkKind::Triangle => small_step_triangle_transform(tree, d, cap),
    }
}

/// Largest `|𝚫_I|` over the given components on intervals of odd generation.
pub fn odd_generation_max_haar(tree: &AdaptiveTree, comps: &[usize]) -> f64 {
    let flat = tree.flat();
    // bit 0: occurs at even generation, bit 1: at odd generation
    let mut parity = vec![0u8; flat.len()];
    let root = flat.root();
    parity[root] = 1;
    for i in (0..flat.len()).rev() {
        if let Some((l, r)) = flat.kids[i] {
            let flip = ((parity[i] & 1) << 1) | ((parity[i] & 2) >> 1);
            parity[l] |= flip;
            parity[r] |= flip;
        }
    }
    let mut worst: f64 = 0.0;
    for (i, n) in flat.nodes.iter().enumerate() {
        if parity[i] & 2 != 0 {
            for &c in comps {
                worst = worst.max(n.haar_of(c).abs());
            }
        }
    }
    worst
}

/// Distribution of the dyadic maximal function of `|component c|` as sorted
/// `(value, measure)` pairs.
pub fn maximal_distribution(tree: &AdaptiveTree, c: usize) -> Vec<(f64, f64)> {
    let flat = tree.flat();
    let mut incoming: Vec<HashMap<u64, f64>> = vec![HashMap::new(); flat.len()];
    let mut result: HashMap<u64, f64> = HashMap::new();
    incoming[flat.root()].insert(0f64.to_bits(), 1.0);
    for i in (0..flat.len()).rev() {
        let here = std::mem::take(&mut incoming[i]);
        let own = flat.nodes[i].avg()[c].abs();
        for (mx, m) in here {
            let v = f64::from_bits(mx).max(own);
            match flat.kids[i] {
                None => *result.entry(v.to_bits()).or_insert(0.0) += m,
                Some((l, r)) => {
                    *incoming[l].entry(v.to_bits()).or_insert(0.0) += 0.5 * m;
                    *incoming[r].entry(v.to_bits()).or_insert(0.0) += 0.5 * m;
                }
            }
        }
    }
    let mut out: Vec<(f64, f64)> = result.into_iter().map(|(b, m)| (f64::from_bits(b), m)).collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Measure of `{value ≥ t}` from a sorted distribution.
pub fn tail_measure(dist: &[(f64, f64)], t: f64) -> f64 {
    dist.iter().filter(|(v, _)| *v >= t).map(|(_, m)| m).sum()
}

#[derive(Clone, Debug, Serialize)]
pub struct SmallStepReport {
    pub kind: WalkKind,
    pub d: u32,
    pub cap: u32,
    pub regions: usize,
    pub distinct_nodes: usize,
    pub height: u32,
    pub frozen_measure: f64,
    pub damage_mult_in: f64,
    pub damage_mult_out: f64,
    pub damage_shift_in: f64,
    pub damage_shift_out: f64,
    pub s_dyadic_in: f64,
    pub s_dyadic_out: f64,
    pub s_dyadic_bound: f64,
    pub ap_in: f64,
    pub ap_out: f64,
    pub f_norm_in: f64,
    pub f_norm_out: f64,
    pub g_norm_in: f64,
    pub g_norm_out: f64,
    pub hyperbola_defect_out: f64,
    pub odd_generation_haar: f64,
}

impl SmallStepReport {
    pub fn damage_ratio(&self) -> f64 {
        match self.kind {
            WalkKind::Generic => self.damage_mult_out / self.damage_mult_in,
            WalkKind::Triangle => self.damage_shift_out / self.damage_shift_in,
        }
    }
}

pub fn small_step_report(q: &Quad, kind: WalkKind, d: u32, cap: u32) -> Result<(Quad, SmallStepReport)> {
    let out = transform(&q.tree, kind, d, cap)?;
    let qo = Quad::new(q.p, out.tree.clone())?;
    let (fi, gi) = quad_norms(q)?;
    let (fo, go) = quad_norms(&qo)?;
    let s_in = dyadic_smoothness(&q.tree, W)?;
    let report = SmallStepReport {
        kind,
        d,
        cap,
        regions: out.regions,
        distinct_nodes: qo.tree.distinct_nodes(),
        height: qo.tree.height(),
        frozen_measure: out.frozen_measure,
        damage_mult_in: damage_mult(&q.tree, F, G),
        damage_mult_out: damage_mult(&qo.tree, F, G),
        damage_shift_in: damage_shift(&q.tree, F, G),
        damage_shift_out: damage_shift(&qo.tree, F, G),
        s_dyadic_in: s_in,
        s_dyadic_out: dyadic_smoothness(&qo.tree, W)?,
        s_dyadic_bound: 1.0 + (s_in - 1.0) / d as f64,
        ap_in: ap_dyadic_components(&q.tree, W, SIGMA, q.p)?.value,
        ap_out: ap_dyadic_components(&qo.tree, W, SIGMA, q.p)?.value,
        f_norm_in: fi,
        f_norm_out: fo,
        g_norm_in: gi,
        g_norm_out: go,
        hyperbola_defect_out: qo.hyperbola_defect(),
        odd_generation_haar: odd_generation_max_haar(&qo.tree, &[W, SIGMA, G]),
    };
    Ok((qo, report))
}

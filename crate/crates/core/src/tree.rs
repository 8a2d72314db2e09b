//! Piecewise-constant vector-valued functions on `[0,1)` stored as full binary trees.
//!
//! Subtrees are reference counted and freely shared, so a tree is really a DAG.
//! The transforms in this crate produce trees thousands of generations deep with
//! astronomically many leaves but only a modest number of distinct nodes, so every
//! analysis walks the distinct nodes once (see [`Flat`]) and never recurses on depth.

use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, OnceLock};

use num_bigint::BigUint;
use serde_json::{json, Value};

use crate::dyadic::DyadicInterval;
use crate::error::{LabError, Result};

pub const DEFAULT_DEPTH_CAP: u32 = 40;
/// Trees taller than this are refused by the JSON codec.
pub const JSON_MAX_HEIGHT: u32 = 100;

#[derive(Debug)]
pub enum Node {
    Leaf {
        values: Box<[f64]>,
        /// Set on cells where a stopping rule ran out of depth and kept the running average.
        frozen: bool,
    },
    Branch {
        avg: Box<[f64]>,
        left: Arc<Node>,
        right: Arc<Node>,
        height: u32,
    },
}

fn placeholder() -> Arc<Node> {
    static P: OnceLock<Arc<Node>> = OnceLock::new();
    P.get_or_init(|| Arc::new(Node::Leaf { values: Box::new([]), frozen: false })).clone()
}

impl Drop for Node {
    fn drop(&mut self) {
        let mut stack = Vec::new();
        if let Node::Branch { left, right, height, .. } = self {
            if *height < 256 {
                return;
            }
            stack.push(std::mem::replace(left, placeholder()));
            stack.push(std::mem::replace(right, placeholder()));
        }
        while let Some(a) = stack.pop() {
            // nested: `Node` implements Drop, so the pattern cannot move out of it
            #[allow(clippy::collapsible_match)]
            if let Ok(mut n) = Arc::try_unwrap(a) {
                if let Node::Branch { left, right, .. } = &mut n {
                    stack.push(std::mem::replace(left, placeholder()));
                    stack.push(std::mem::replace(right, placeholder()));
                }
            }
        }
    }
}

impl Node {
    pub fn leaf(values: Vec<f64>) -> Arc<Node> {
        Arc::new(Node::Leaf { values: values.into_boxed_slice(), frozen: false })
    }

    pub fn frozen(values: Vec<f64>) -> Arc<Node> {
        Arc::new(Node::Leaf { values: values.into_boxed_slice(), frozen: true })
    }

    pub fn branch(left: Arc<Node>, right: Arc<Node>) -> Arc<Node> {
        let avg: Box<[f64]> = left.avg().iter().zip(right.avg()).map(|(a, b)| 0.5 * (a + b)).collect();
        let height = 1 + left.height().max(right.height());
        Arc::new(Node::Branch { avg, left, right, height })
    }

    /// Branch whose stored average is supplied rather than computed; used where the
    /// average is known in closed form and must be reproduced bit for bit.
    pub fn branch_with_avg(left: Arc<Node>, right: Arc<Node>, avg: Vec<f64>) -> Arc<Node> {
        let height = 1 + left.height().max(right.height());
        Arc::new(Node::Branch { avg: avg.into_boxed_slice(), left, right, height })
    }

    pub fn avg(&self) -> &[f64] {
        match self {
            Node::Leaf { values, .. } => values,
            Node::Branch { avg, .. } => avg,
        }
    }

    pub fn height(&self) -> u32 {
        match self {
            Node::Leaf { .. } => 0,
            Node::Branch { height, .. } => *height,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Node::Leaf { .. })
    }

    pub fn is_frozen(&self) -> bool {
        matches!(self, Node::Leaf { frozen: true, .. })
    }

    pub fn children(&self) -> Option<(&Arc<Node>, &Arc<Node>)> {
        match self {
            Node::Leaf { .. } => None,
            Node::Branch { left, right, .. } => Some((left, right)),
        }
    }

    /// `𝚫_I` for the interval this node sits on (zero on leaves).
    pub fn haar(&self) -> Vec<f64> {
        match self.children() {
            None => vec![0.0; self.avg().len()],
            Some((l, r)) => l.avg().iter().zip(r.avg()).map(|(a, b)| 0.5 * (b - a)).collect(),
        }
    }

    pub fn haar_of(&self, c: usize) -> f64 {
        match self.children() {
            None => 0.0,
            Some((l, r)) => 0.5 * (r.avg()[c] - l.avg()[c]),
        }
    }

    pub fn left_or_self(self: &Arc<Node>) -> &Arc<Node> {
        self.children().map(|(l, _)| l).unwrap_or(self)
    }

    pub fn right_or_self(self: &Arc<Node>) -> &Arc<Node> {
        self.children().map(|(_, r)| r).unwrap_or(self)
    }

    /// Grandchildren in left-to-right order; leaves stand in for their own descendants.
    pub fn grandchildren(self: &Arc<Node>) -> [Arc<Node>; 4] {
        let l = self.left_or_self();
        let r = self.right_or_self();
        [l.left_or_self().clone(), l.right_or_self().clone(), r.left_or_self().clone(), r.right_or_self().clone()]
    }
}

/// Pointer-identity handle used as a memo key.
#[derive(Clone, Debug)]
pub struct P(pub Arc<Node>);

impl PartialEq for P {
    fn eq(&self, o: &Self) -> bool {
        Arc::ptr_eq(&self.0, &o.0)
    }
}
impl Eq for P {}
impl Hash for P {
    fn hash<H: Hasher>(&self, h: &mut H) {
        (Arc::as_ptr(&self.0) as usize).hash(h)
    }
}

pub(crate) enum Step<K, V> {
    Done(V),
    Split(K, K),
}

/// Memoised bottom-up evaluation over an implicit binary DAG, without recursion.
pub(crate) fn dag_eval<K, V>(root: K, mut expand: impl FnMut(&K) -> Step<K, V>, mut join: impl FnMut(&K, &V, &V) -> V) -> V
where
    K: Hash + Eq + Clone,
    V: Clone,
{
    let mut memo: HashMap<K, V> = HashMap::new();
    let mut stack: Vec<(K, Option<(K, K)>)> = vec![(root.clone(), None)];
    while let Some((k, kids)) = stack.pop() {
        match kids {
            None => {
                if memo.contains_key(&k) {
                    continue;
                }
                match expand(&k) {
                    Step::Done(v) => {
                        memo.insert(k, v);
                    }
                    Step::Split(a, b) => {
                        stack.push((k, Some((a.clone(), b.clone()))));
                        if !memo.contains_key(&b) {
                            stack.push((b, None));
                        }
                        if !memo.contains_key(&a) {
                            stack.push((a, None));
                        }
                    }
                }
            }
            Some((a, b)) => {
                if memo.contains_key(&k) {
                    continue;
                }
                let v = join(&k, &memo[&a], &memo[&b]);
                memo.insert(k, v);
            }
        }
    }
    memo.remove(&root).expect("root evaluated")
}

/// Distinct nodes in post-order (children before parents, root last).
pub struct Flat<'a> {
    pub nodes: Vec<&'a Node>,
    pub kids: Vec<Option<(usize, usize)>>,
}

impl<'a> Flat<'a> {
    pub fn new(root: &'a Arc<Node>) -> Self {
        let mut index: HashMap<*const Node, usize> = HashMap::new();
        let mut nodes = Vec::new();
        let mut kids = Vec::new();
        let mut stack: Vec<(&'a Arc<Node>, bool)> = vec![(root, false)];
        while let Some((n, expanded)) = stack.pop() {
            let ptr = Arc::as_ptr(n);
            if index.contains_key(&ptr) {
                continue;
            }
            match n.children() {
                None => {
                    index.insert(ptr, nodes.len());
                    nodes.push(n.as_ref());
                    kids.push(None);
                }
                Some((l, r)) => {
                    if expanded {
                        let li = index[&Arc::as_ptr(l)];
                        let ri = index[&Arc::as_ptr(r)];
                        index.insert(ptr, nodes.len());
                        nodes.push(n.as_ref());
                        kids.push(Some((li, ri)));
                    } else {
                        stack.push((n, true));
                        stack.push((r, false));
                        stack.push((l, false));
                    }
                }
            }
        }
        Flat { nodes, kids }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Bottom-up fold: `leaf(node)` on leaves, `branch(node, left, right)` elsewhere.
    pub fn fold<T: Clone>(&self, mut leaf: impl FnMut(&Node) -> T, mut branch: impl FnMut(&Node, &T, &T) -> T) -> T {
        let mut out: Vec<T> = Vec::with_capacity(self.len());
        for (i, n) in self.nodes.iter().enumerate() {
            let v = match self.kids[i] {
                None => leaf(n),
                Some((l, r)) => branch(n, &out[l], &out[r]),
            };
            out.push(v);
        }
        out.pop().unwrap()
    }

    /// Total Lebesgue measure covered by all occurrences of each distinct node.
    pub fn masses(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.len()];
        let root = self.root();
        m[root] = 1.0;
        for i in (0..self.len()).rev() {
            if let Some((l, r)) = self.kids[i] {
                let h = 0.5 * m[i];
                m[l] += h;
                m[r] += h;
            }
        }
        m
    }

    /// Shallowest generation at which each distinct node occurs.
    pub fn min_depths(&self) -> Vec<u32> {
        let mut d = vec![u32::MAX; self.len()];
        let root = self.root();
        d[root] = 0;
        for i in (0..self.len()).rev() {
            if let Some((l, r)) = self.kids[i] {
                let nd = d[i].saturating_add(1);
                d[l] = d[l].min(nd);
                d[r] = d[r].min(nd);
            }
        }
        d
    }
}

#[derive(Clone, Debug)]
pub struct AdaptiveTree {
    pub dim: usize,
    pub root: Arc<Node>,
    pub cap: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LeafCell {
    pub interval: DyadicInterval,
    pub values: Vec<f64>,
    pub frozen: bool,
}

impl AdaptiveTree {
    pub fn new(root: Arc<Node>, cap: u32) -> Result<Self> {
        let dim = root.avg().len();
        if dim == 0 {
            return Err(LabError::Param("tree values must have at least one component".into()));
        }
        if root.height() > cap {
            return Err(LabError::DepthCap { interval: format!("leaf at generation {}", root.height()), cap });
        }
        Ok(AdaptiveTree { dim, root, cap })
    }

    pub fn with_default_cap(root: Arc<Node>) -> Result<Self> {
        Self::new(root, DEFAULT_DEPTH_CAP)
    }

    pub fn constant(values: Vec<f64>) -> Self {
        Self::new(Node::leaf(values), DEFAULT_DEPTH_CAP).unwrap()
    }

    /// Builds a tree from leaf cells that must partition `[0,1)`.
    pub fn from_leaves(cells: Vec<(DyadicInterval, Vec<f64>)>, cap: u32) -> Result<Self> {
        if cells.is_empty() {
            return Err(LabError::Param("no cells".into()));
        }
        let dim = cells[0].1.len();
        let mut total = 0.0;
        let mut deepest = 0;
        let mut map = HashMap::new();
        for (i, v) in cells {
            if v.len() != dim {
                return Err(LabError::Dim { expected: dim, found: v.len() });
            }
            if i.gen > cap {
                return Err(LabError::DepthCap { interval: i.key(), cap });
            }
            total += i.len();
            deepest = deepest.max(i.gen);
            if map.insert(i.clone(), v).is_some() {
                return Err(LabError::Param(format!("duplicate cell {i}")));
            }
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(LabError::Param(format!("cells cover measure {total}, not 1")));
        }
        fn build(i: DyadicInterval, map: &mut HashMap<DyadicInterval, Vec<f64>>, deepest: u32) -> Result<Arc<Node>> {
            if let Some(v) = map.remove(&i) {
                return Ok(Node::leaf(v));
            }
            if i.gen >= deepest {
                return Err(LabError::Param(format!("cells leave {i} uncovered")));
            }
            let l = build(i.left(), map, deepest)?;
            let r = build(i.right(), map, deepest)?;
            Ok(Node::branch(l, r))
        }
        let root = build(DyadicInterval::unit(), &mut map, deepest)?;
        if !map.is_empty() {
            return Err(LabError::Param("cells overlap".into()));
        }
        Self::new(root, cap)
    }

    /// Uniform grid of `2^n` cells with values `f(k)`.
    pub fn uniform(n: u32, f: impl Fn(usize) -> Vec<f64>) -> Result<Self> {
        let mut level: Vec<Arc<Node>> = (0..1usize << n).map(|k| Node::leaf(f(k))).collect();
        while level.len() > 1 {
            level = level.chunks(2).map(|c| Node::branch(c[0].clone(), c[1].clone())).collect();
        }
        Self::new(level.pop().unwrap(), DEFAULT_DEPTH_CAP.max(n))
    }

    /// `h_I` as a scalar tree.
    pub fn haar_function(i: &DyadicInterval) -> Self {
        let mut node = Node::branch(Node::leaf(vec![-1.0]), Node::leaf(vec![1.0]));
        let zero = Node::leaf(vec![0.0]);
        for l in (0..i.gen).rev() {
            node = if i.step(l) { Node::branch(zero.clone(), node) } else { Node::branch(node, zero.clone()) };
        }
        Self::new(node, DEFAULT_DEPTH_CAP.max(i.gen + 1)).unwrap()
    }

    pub fn flat(&self) -> Flat<'_> {
        Flat::new(&self.root)
    }

    pub fn height(&self) -> u32 {
        self.root.height()
    }

    pub fn distinct_nodes(&self) -> usize {
        self.flat().len()
    }

    pub fn leaf_count(&self) -> f64 {
        self.flat().fold(|_| 1.0, |_, a, b| a + b)
    }

    fn check_depth(&self, i: &DyadicInterval) -> Result<()> {
        if i.gen > self.cap {
            Err(LabError::DepthCap { interval: i.key(), cap: self.cap })
        } else {
            Ok(())
        }
    }

    /// Node covering `I`, or the leaf that contains it.
    pub fn node_at(&self, i: &DyadicInterval) -> Result<&Arc<Node>> {
        self.check_depth(i)?;
        let mut n = &self.root;
        for right in i.path() {
            match n.children() {
                None => break,
                Some((l, r)) => n = if right { r } else { l },
            }
        }
        Ok(n)
    }

    pub fn average(&self, i: &DyadicInterval) -> Result<Vec<f64>> {
        Ok(self.node_at(i)?.avg().to_vec())
    }

    pub fn haar_coeff(&self, i: &DyadicInterval) -> Result<Vec<f64>> {
        self.check_depth(i)?;
        let mut n = &self.root;
        for right in i.path() {
            match n.children() {
                None => return Ok(vec![0.0; self.dim]),
                Some((l, r)) => n = if right { r } else { l },
            }
        }
        Ok(n.haar())
    }

    /// `Δ_I = 𝚫_I h_I`, returned on all of `[0,1)` and zero off `I`.
    pub fn martingale_diff(&self, i: &DyadicInterval) -> Result<Self> {
        let d = self.haar_coeff(i)?;
        let neg: Vec<f64> = d.iter().map(|x| -x).collect();
        let zero = Node::leaf(vec![0.0; self.dim]);
        let mut node = Node::branch(Node::leaf(neg), Node::leaf(d));
        for l in (0..i.gen).rev() {
            node = if i.step(l) { Node::branch(zero.clone(), node) } else { Node::branch(node, zero.clone()) };
        }
        Self::new(node, self.cap.max(i.gen + 1))
    }

    /// Restriction to `I`, rescaled to `[0,1)`.
    pub fn subtree_at(&self, i: &DyadicInterval) -> Result<Self> {
        let n = self.node_at(i)?.clone();
        Self::new(n, self.cap)
    }

    /// Replaces the function on `target` by a rescaled copy of `sub`.
    pub fn graft(&self, target: &DyadicInterval, sub: &Arc<Node>) -> Result<Self> {
        if sub.avg().len() != self.dim {
            return Err(LabError::Dim { expected: self.dim, found: sub.avg().len() });
        }
        if target.gen + sub.height() > self.cap {
            return Err(LabError::DepthCap { interval: target.key(), cap: self.cap });
        }
        let mut spine = Vec::with_capacity(target.gen as usize);
        let mut n = self.root.clone();
        for right in target.path() {
            let (l, r) = match n.children() {
                Some((l, r)) => (l.clone(), r.clone()),
                None => (n.clone(), n.clone()),
            };
            if right {
                spine.push((true, l));
                n = r;
            } else {
                spine.push((false, r));
                n = l;
            }
        }
        let mut node = sub.clone();
        while let Some((right, sibling)) = spine.pop() {
            node = if right { Node::branch(sibling, node) } else { Node::branch(node, sibling) };
        }
        Self::new(node, self.cap)
    }

    pub fn map_leaves(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let root = dag_eval(
            P(self.root.clone()),
            |k| match k.0.children() {
                None => Step::Done(if k.0.is_frozen() { Node::frozen(f(k.0.avg())) } else { Node::leaf(f(k.0.avg())) }),
                Some((l, r)) => Step::Split(P(l.clone()), P(r.clone())),
            },
            |_, a, b| Node::branch(a.clone(), b.clone()),
        );
        let dim = root.avg().len();
        AdaptiveTree { dim, root, cap: self.cap }
    }

    /// Applies `f` to every stored average, branches included. Meant for affine maps,
    /// where it keeps each average an exact image of the original one.
    pub fn map_averages(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let root = dag_eval(
            P(self.root.clone()),
            |k| match k.0.children() {
                None => Step::Done(if k.0.is_frozen() { Node::frozen(f(k.0.avg())) } else { Node::leaf(f(k.0.avg())) }),
                Some((l, r)) => Step::Split(P(l.clone()), P(r.clone())),
            },
            |k, a, b| Node::branch_with_avg(a.clone(), b.clone(), f(k.0.avg())),
        );
        let dim = root.avg().len();
        AdaptiveTree { dim, root, cap: self.cap }
    }

    /// `F(1 − x)`.
    pub fn mirror(&self) -> Self {
        let root = dag_eval(
            P(self.root.clone()),
            |k| match k.0.children() {
                None => Step::Done(k.0.clone()),
                Some((l, r)) => Step::Split(P(l.clone()), P(r.clone())),
            },
            |k, a, b| Node::branch_with_avg(b.clone(), a.clone(), k.0.avg().to_vec()),
        );
        AdaptiveTree { dim: self.dim, root, cap: self.cap }
    }

    pub fn component(&self, c: usize) -> Self {
        self.map_leaves(|v| vec![v[c]])
    }

    /// Common refinement of several trees with concatenated components.
    pub fn zip(trees: &[&AdaptiveTree]) -> Self {
        let cap = trees.iter().map(|t| t.cap).max().unwrap_or(DEFAULT_DEPTH_CAP);
        let start: Vec<P> = trees.iter().map(|t| P(t.root.clone())).collect();
        let root = dag_eval(
            start,
            |k: &Vec<P>| {
                if k.iter().all(|p| p.0.is_leaf()) {
                    let mut v = Vec::new();
                    let mut frozen = false;
                    for p in k {
                        v.extend_from_slice(p.0.avg());
                        frozen |= p.0.is_frozen();
                    }
                    Step::Done(if frozen { Node::frozen(v) } else { Node::leaf(v) })
                } else {
                    let l = k.iter().map(|p| P(p.0.left_or_self().clone())).collect();
                    let r = k.iter().map(|p| P(p.0.right_or_self().clone())).collect();
                    Step::Split(l, r)
                }
            },
            |_, a, b| Node::branch(a.clone(), b.clone()),
        );
        let dim = root.avg().len();
        AdaptiveTree { dim, root, cap }
    }

    /// Leafwise combination of two trees of equal dimension on their common refinement.
    pub fn combine(&self, other: &AdaptiveTree, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.dim != other.dim {
            return Err(LabError::Dim { expected: self.dim, found: other.dim });
        }
        let m = self.dim;
        Ok(AdaptiveTree::zip(&[self, other]).map_leaves(|v| (0..m).map(|i| f(v[i], v[m + i])).collect()))
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map_leaves(|v| v.iter().map(|x| s * x).collect())
    }

    /// Largest leafwise absolute difference over the common refinement.
    pub fn max_abs_diff(&self, other: &AdaptiveTree) -> Result<f64> {
        let d = self.combine(other, |a, b| (a - b).abs())?;
        Ok(d.flat().fold(|n| n.avg().iter().cloned().fold(0.0, f64::max), |_, a, b| a.max(*b)))
    }

    /// `E_n`: conditional expectation onto generation `n`.
    pub fn expectation(&self, n: u32) -> Self {
        let root = dag_eval(
            (P(self.root.clone()), n),
            |(p, k)| match p.0.children() {
                None => Step::Done(p.0.clone()),
                Some(_) if *k == 0 => Step::Done(Node::leaf(p.0.avg().to_vec())),
                Some((l, r)) => Step::Split((P(l.clone()), k - 1), (P(r.clone()), k - 1)),
            },
            |_, a, b| Node::branch(a.clone(), b.clone()),
        );
        AdaptiveTree { dim: self.dim, root, cap: self.cap }
    }

    /// Explicit leaf list, refused when the tree has more than `limit` leaves.
    pub fn leaves(&self, limit: usize) -> Result<Vec<LeafCell>> {
        let count = self.leaf_count();
        if count > limit as f64 {
            return Err(LabError::TooLarge(count));
        }
        let mut out = Vec::with_capacity(count as usize);
        let mut stack = vec![(&self.root, DyadicInterval::unit())];
        while let Some((n, i)) = stack.pop() {
            match n.children() {
                None => out.push(LeafCell { interval: i, values: n.avg().to_vec(), frozen: n.is_frozen() }),
                Some((l, r)) => {
                    stack.push((r, i.right()));
                    stack.push((l, i.left()));
                }
            }
        }
        Ok(out)
    }

    /// Level sets of component `c` as sorted `(value, measure)` pairs; frozen cells
    /// are skipped when `skip_frozen` is set.
    pub fn level_measures(&self, c: usize, skip_frozen: bool) -> Vec<(f64, f64)> {
        let flat = self.flat();
        let m = flat.masses();
        let mut acc: HashMap<u64, f64> = HashMap::new();
        for (i, n) in flat.nodes.iter().enumerate() {
            if n.is_leaf() && !(skip_frozen && n.is_frozen()) {
                *acc.entry(n.avg()[c].to_bits()).or_insert(0.0) += m[i];
            }
        }
        let mut out: Vec<(f64, f64)> = acc.into_iter().map(|(b, w)| (f64::from_bits(b), w)).collect();
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        out
    }

    pub fn frozen_measure(&self) -> f64 {
        let flat = self.flat();
        let m = flat.masses();
        flat.nodes.iter().zip(&m).filter(|(n, _)| n.is_frozen()).fold(0.0, |a, (_, w)| a + w)
    }

    /// Distinct node averages (each distinct node once).
    pub fn node_averages(&self) -> Vec<Vec<f64>> {
        self.flat().nodes.iter().map(|n| n.avg().to_vec()).collect()
    }

    /// Largest violation of `⟨X⟩_I = (⟨X⟩_{I₋} + ⟨X⟩_{I₊})/2`.
    pub fn martingale_defect(&self) -> f64 {
        let flat = self.flat();
        let mut worst = 0.0f64;
        for (i, n) in flat.nodes.iter().enumerate() {
            if let Some((l, r)) = flat.kids[i] {
                for c in 0..self.dim {
                    let e = n.avg()[c] - 0.5 * (flat.nodes[l].avg()[c] + flat.nodes[r].avg()[c]);
                    worst = worst.max(e.abs());
                }
            }
        }
        worst
    }

    /// `G∘ψ`: copies the subtree over each source onto its paired target.
    ///
    /// Sources must be pairwise disjoint, targets pairwise disjoint, both must cover the
    /// same region, and each pair must have equal length.
    pub fn compose_rearrangement(&self, plan: &[(DyadicInterval, DyadicInterval)]) -> Result<Self> {
        for (s, t) in plan {
            if s.gen != t.gen {
                return Err(LabError::Plan(format!("{s} and {t} differ in length")));
            }
        }
        for a in 0..plan.len() {
            for b in a + 1..plan.len() {
                if !plan[a].0.disjoint(&plan[b].0) {
                    return Err(LabError::Plan(format!("sources {} and {} overlap", plan[a].0, plan[b].0)));
                }
                if !plan[a].1.disjoint(&plan[b].1) {
                    return Err(LabError::Plan(format!("targets {} and {} overlap", plan[a].1, plan[b].1)));
                }
            }
        }
        for (_, t) in plan {
            let covered: f64 = plan
                .iter()
                .map(|(s, _)| {
                    if s.contains(t) {
                        t.len()
                    } else if t.contains(s) {
                        s.len()
                    } else {
                        0.0
                    }
                })
                .sum();
            if covered != t.len() {
                return Err(LabError::Plan(format!("target {t} is not covered by the sources")));
            }
        }
        let copies: Vec<(DyadicInterval, Arc<Node>)> =
            plan.iter().map(|(s, t)| Ok((t.clone(), self.node_at(s)?.clone()))).collect::<Result<_>>()?;
        let mut out = self.clone();
        for (t, n) in copies {
            out = out.graft(&t, &n)?;
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<Value> {
        if self.height() > JSON_MAX_HEIGHT {
            return Err(LabError::Param(format!("tree of height {} is too deep for JSON (limit {JSON_MAX_HEIGHT})", self.height())));
        }
        fn node(n: &Node) -> Value {
            match n.children() {
                None => json!({ "leaf": n.avg() }),
                Some((l, r)) => json!({ "branch": [node(l), node(r)] }),
            }
        }
        Ok(json!({ "dim": self.dim, "root": node(&self.root) }))
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let dim = v["dim"].as_u64().ok_or_else(|| LabError::Param("missing dim".into()))? as usize;
        fn node(v: &Value, dim: usize) -> Result<Arc<Node>> {
            if let Some(leaf) = v.get("leaf") {
                let vals: Vec<f64> = serde_json::from_value(leaf.clone())?;
                if vals.len() != dim {
                    return Err(LabError::Dim { expected: dim, found: vals.len() });
                }
                Ok(Node::leaf(vals))
            } else if let Some(Value::Array(kids)) = v.get("branch") {
                if kids.len() != 2 {
                    return Err(LabError::Param("branch needs two children".into()));
                }
                Ok(Node::branch(node(&kids[0], dim)?, node(&kids[1], dim)?))
            } else {
                Err(LabError::Param("node is neither leaf nor branch".into()))
            }
        }
        let root = node(&v["root"], dim)?;
        Self::new(root, DEFAULT_DEPTH_CAP.max(JSON_MAX_HEIGHT))
    }
}

/// Index of a descendant reached by a bit path, as a `DyadicInterval`.
pub fn interval_from_path(path: &[bool]) -> DyadicInterval {
    let mut idx = BigUint::from(0u32);
    for &b in path {
        idx <<= 1u32;
        if b {
            idx += 1u32;
        }
    }
    DyadicInterval { gen: path.len() as u32, idx }
}

/// Components of a [`Quad`] tree.
pub const W: usize = 0;
pub const SIGMA: usize = 1;
pub const F: usize = 2;
pub const G: usize = 3;

/// Weights and test functions `(w, σ, 𝐟, 𝐠)` with exponent `p`.
#[derive(Clone, Debug)]
pub struct Quad {
    pub p: f64,
    pub tree: AdaptiveTree,
}

impl Quad {
    pub fn new(p: f64, tree: AdaptiveTree) -> Result<Self> {
        if !(p > 1.0) {
            return Err(LabError::Param(format!("p = {p} must exceed 1")));
        }
        if tree.dim != 4 {
            return Err(LabError::Dim { expected: 4, found: tree.dim });
        }
        let flat = tree.flat();
        for n in flat.nodes.iter().filter(|n| n.is_leaf()) {
            let v = n.avg();
            if !(v[W] > 0.0) {
                return Err(LabError::NonPositive(v[W]));
            }
            if !(v[SIGMA] > 0.0) {
                return Err(LabError::NonPositive(v[SIGMA]));
            }
        }
        Ok(Quad { p, tree })
    }

    pub fn from_parts(p: f64, w: &AdaptiveTree, sigma: &AdaptiveTree, f: &AdaptiveTree, g: &AdaptiveTree) -> Result<Self> {
        Self::new(p, AdaptiveTree::zip(&[w, sigma, f, g]))
    }

    pub fn p_prime(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    /// Largest `|wσ^{p-1} - 1|` over non-frozen leaves.
    pub fn hyperbola_defect(&self) -> f64 {
        let flat = self.tree.flat();
        flat.nodes
            .iter()
            .filter(|n| n.is_leaf() && !n.is_frozen())
            .map(|n| (n.avg()[W] * n.avg()[SIGMA].powf(self.p - 1.0) - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

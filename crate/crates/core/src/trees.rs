//! Aldous–Broder and Wilson choice spanning trees of `K_n`.

use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;
use crate::walk::{AvoidMode, ChoiceRule, ChoiceWalkState, Variant};

pub const ABSENT: u32 = u32::MAX;
pub const NO_TIME: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Ab,
    Wilson,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Ab => "ab",
            Algorithm::Wilson => "wilson",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ab" | "aldous-broder" => Ok(Algorithm::Ab),
            "wilson" => Ok(Algorithm::Wilson),
            _ => invalid(format!("unknown algorithm '{s}'")),
        }
    }
}

/// A rooted tree on a subset of `{0, .., n-1}`, grown branch by branch.
///
/// For Aldous–Broder trees `first_entry` holds walk times, `sigma` the times of
/// forced collisions and `targets` the vertex each collision jumped to. For
/// Wilson trees `first_entry` is the order in which vertices joined the tree
/// (each branch added from its tree end back to its starting vertex), `sigma` the index of
/// the last vertex of each branch and `targets` the tree vertex it hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledTree {
    pub n: usize,
    pub k: usize,
    pub algorithm: Algorithm,
    pub variant: Variant,
    pub root: u32,
    /// Parent of each vertex; the root is its own parent, absent vertices hold `ABSENT`.
    pub parent: Vec<u32>,
    pub first_entry: Vec<u64>,
    pub branch_of: Vec<u32>,
    pub sigma: Vec<u64>,
    pub targets: Vec<u32>,
    /// Tree vertices sorted by `first_entry`.
    pub order: Vec<u32>,
}

impl LabeledTree {
    fn empty(n: usize, k: usize, algorithm: Algorithm, variant: Variant, root: u32) -> Self {
        let mut t = Self {
            n,
            k,
            algorithm,
            variant,
            root,
            parent: vec![ABSENT; n],
            first_entry: vec![NO_TIME; n],
            branch_of: vec![ABSENT; n],
            sigma: Vec::new(),
            targets: Vec::new(),
            order: Vec::new(),
        };
        t.insert(root, root, 0, 0);
        t
    }

    fn insert(&mut self, v: u32, parent: u32, time: u64, branch: u32) {
        let i = v as usize;
        self.parent[i] = parent;
        self.first_entry[i] = time;
        self.branch_of[i] = branch;
        self.order.push(v);
    }

    pub fn size(&self) -> usize {
        self.order.len()
    }

    pub fn is_spanning(&self) -> bool {
        self.order.len() == self.n
    }

    pub fn contains(&self, v: u32) -> bool {
        (v as usize) < self.n && self.parent[v as usize] != ABSENT
    }

    /// Number of branch ends recorded.
    pub fn branch_count(&self) -> usize {
        self.sigma.len()
    }

    /// Edges `(parent, child)` in order of addition.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        self.order[1..].iter().map(|&v| (self.parent[v as usize], v)).collect()
    }

    /// Number of vertices in the tree at the end of branch `i` (1-based);
    /// `i = 0` gives 1 for the root alone.
    pub fn size_at_branch(&self, i: usize) -> usize {
        if i == 0 {
            return 1;
        }
        let s = self.sigma[i - 1];
        match self.algorithm {
            Algorithm::Ab => self.order.partition_point(|&v| self.first_entry[v as usize] < s),
            Algorithm::Wilson => s as usize + 1,
        }
    }

    /// Position of `v` in the order of addition.
    pub fn entry_rank(&self, v: u32) -> Option<usize> {
        if !self.contains(v) {
            return None;
        }
        let t = self.first_entry[v as usize];
        Some(self.order.partition_point(|&w| self.first_entry[w as usize] < t))
    }

    fn depths(&self) -> Vec<u32> {
        let mut depth = vec![0u32; self.n];
        for &v in &self.order[1..] {
            depth[v as usize] = depth[self.parent[v as usize] as usize] + 1;
        }
        depth
    }

    /// Checks parent links, times and branch ends.
    pub fn validate(&self) -> Result<()> {
        if self.order.first() != Some(&self.root) || self.parent[self.root as usize] != self.root {
            return invalid("root must come first and be its own parent");
        }
        if self.first_entry[self.root as usize] != 0 {
            return invalid("root must have entry time 0");
        }
        let mut seen = vec![false; self.n];
        seen[self.root as usize] = true;
        for w in self.order.windows(2) {
            if self.first_entry[w[0] as usize] >= self.first_entry[w[1] as usize] {
                return invalid("entry times must be strictly increasing along the order");
            }
        }
        for &v in &self.order[1..] {
            let p = self.parent[v as usize];
            if p == ABSENT || !seen[p as usize] {
                return invalid(format!("parent of {v} is not an earlier tree vertex"));
            }
            if seen[v as usize] {
                return invalid(format!("vertex {v} appears twice"));
            }
            seen[v as usize] = true;
        }
        if self.parent.iter().enumerate().any(|(v, &p)| (p != ABSENT) != seen[v]) {
            return invalid("parent map and vertex order disagree");
        }
        if !self.sigma.windows(2).all(|w| w[0] < w[1]) {
            return invalid("branch ends must be strictly increasing");
        }
        Ok(())
    }
}

/// Rescaled stick vectors of a tree: `y[i] = (size(T_i) - 1)/N`,
/// `z[i] = rank(attach vertex of branch i+1)/N` with `N = n^{k/(k+1)}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StickVector {
    pub k: usize,
    pub n: usize,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

/// Normalized vertex weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexMeasure {
    pub gamma: f64,
    pub weights: Vec<f64>,
}

impl VertexMeasure {
    pub fn mass<I: IntoIterator<Item = u32>>(&self, vertices: I) -> f64 {
        vertices.into_iter().map(|v| self.weights[v as usize]).sum()
    }
}

fn check_n_k(n: usize, k: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::Range(format!("n must be >= 2, got {n}")));
    }
    if k == 0 {
        return invalid("k must be >= 1");
    }
    if n >= ABSENT as usize {
        return Err(Error::Range(format!("n = {n} is too large")));
    }
    Ok(())
}

/// Reusable state for repeated Aldous–Broder runs on the same `K_n`.
#[derive(Debug, Clone)]
pub struct AbSampler {
    n: usize,
    rule: ChoiceRule,
    state: ChoiceWalkState,
    buf: Vec<u32>,
}

impl AbSampler {
    pub fn new(n: usize, k: usize, variant: Variant) -> Result<Self> {
        check_n_k(n, k)?;
        Ok(Self {
            n,
            rule: ChoiceRule::new(variant, k)?,
            state: ChoiceWalkState::new(n, AvoidMode::FullPast, 0)?,
            buf: Vec::with_capacity(k),
        })
    }

    /// Runs the walk from vertex 0 until it covers `K_n` or until the
    /// `max_branches`-th forced collision, whichever comes first.
    pub fn sample(&mut self, max_branches: Option<usize>, rng: &mut RngStream) -> LabeledTree {
        let mut tree = LabeledTree::empty(self.n, self.rule.k, Algorithm::Ab, self.rule.variant, 0);
        self.state.reset(0);
        let limit = max_branches.unwrap_or(usize::MAX);
        let mut time = 0u64;
        while tree.size() < self.n && tree.sigma.len() < limit {
            let from = self.state.current();
            let fresh_before = self.state.visited_count();
            let v = self.state.step(&self.rule, rng, &mut self.buf);
            time += 1;
            if self.state.visited_count() > fresh_before {
                tree.insert(v, from, time, tree.sigma.len() as u32);
            } else {
                tree.sigma.push(time);
                tree.targets.push(v);
            }
        }
        tree
    }
}

/// Aldous–Broder choice tree: first-entry edges of the choice walk (avoiding
/// its full past) run to cover time, started at vertex 0.
pub fn sample_ab_tree(n: usize, k: usize, variant: Variant, rng: &mut RngStream) -> Result<LabeledTree> {
    Ok(AbSampler::new(n, k, variant)?.sample(None, rng))
}

/// The partial tree `T_i` at the `branches`-th forced collision.
pub fn sample_ab_partial(n: usize, k: usize, variant: Variant, branches: usize, rng: &mut RngStream) -> Result<LabeledTree> {
    Ok(AbSampler::new(n, k, variant)?.sample(Some(branches), rng))
}

/// Reusable state for Wilson choice trees.
#[derive(Debug, Clone)]
pub struct WilsonSampler {
    n: usize,
    k: usize,
    variant: Variant,
    state: ChoiceWalkState,
    buf: Vec<u32>,
}

impl WilsonSampler {
    pub fn new(n: usize, k: usize, variant: Variant) -> Result<Self> {
        check_n_k(n, k)?;
        Ok(Self { n, k, variant, state: ChoiceWalkState::new(n, AvoidMode::LoopErasure, 0)?, buf: Vec::with_capacity(k) })
    }

    /// Grows the tree from `order[0]` by loop-erased maximal choice walks
    /// started at each later vertex of `order` that is not yet in the tree.
    pub fn sample_with_order(&mut self, order: &[u32], rng: &mut RngStream) -> Result<LabeledTree> {
        if order.len() != self.n {
            return invalid("vertex order must list every vertex once");
        }
        let mut seen = vec![false; self.n];
        for &v in order {
            if v as usize >= self.n || std::mem::replace(&mut seen[v as usize], true) {
                return invalid("vertex order must be a permutation");
            }
        }
        let rule = ChoiceRule::maximal(self.k)?;
        let root = order[0];
        let mut tree = LabeledTree::empty(self.n, self.k, Algorithm::Wilson, self.variant, root);
        self.state.clear_terminal();
        let mut next_rank = 1u64;
        self.state.set_terminal(root, next_rank);
        for &start in &order[1..] {
            if self.state.is_terminal(start) {
                continue;
            }
            self.state.reset(start);
            if self.variant == Variant::Uniform {
                self.state.set_terminal_salt(Some(rng.next_u64()));
            }
            let hit = loop {
                let v = self.state.step_peek(&rule, rng, &mut self.buf);
                if self.state.is_terminal(v) {
                    break v;
                }
                self.state.advance(v);
            };
            self.state.set_terminal_salt(None);
            let path = self.state.loop_erasure();
            let len = path.len();
            let branch = tree.sigma.len() as u32;
            // added from the tree outward so parents precede children
            for j in (0..len).rev() {
                let parent = if j + 1 < len { path[j + 1] } else { hit };
                let time = tree.size() as u64;
                tree.insert(path[j], parent, time, branch);
            }
            // earlier positions on a newer branch rank higher
            let path: Vec<u32> = path.to_vec();
            for (j, &v) in path.iter().enumerate() {
                self.state.set_terminal(v, next_rank + (len - j) as u64);
            }
            next_rank += len as u64;
            tree.sigma.push(tree.size() as u64 - 1);
            tree.targets.push(hit);
        }
        Ok(tree)
    }

    /// Wilson tree with root 0 and the other vertices visited in a uniformly
    /// random order.
    pub fn sample(&mut self, rng: &mut RngStream) -> LabeledTree {
        let mut order: Vec<u32> = (0..self.n as u32).collect();
        order[1..].shuffle(rng);
        self.sample_with_order(&order, rng).expect("order is a permutation")
    }
}

impl ChoiceWalkState {
    /// Draws choices and resolves them without moving the walk.
    pub(crate) fn step_peek(&self, rule: &ChoiceRule, rng: &mut RngStream, buf: &mut Vec<u32>) -> u32 {
        buf.clear();
        buf.extend((0..rule.k).map(|_| rng.vertex(self.n()) as u32));
        crate::walk::choice_step(self, rule, buf).expect("choices are valid")
    }
}

/// Wilson choice tree rooted at 0, other vertices in uniformly random order.
pub fn sample_wilson_tree(n: usize, k: usize, variant: Variant, rng: &mut RngStream) -> Result<LabeledTree> {
    Ok(WilsonSampler::new(n, k, variant)?.sample(rng))
}

/// Wilson choice tree with an explicit vertex order (root first).
pub fn sample_wilson_tree_with_order(n: usize, k: usize, variant: Variant, order: &[u32], rng: &mut RngStream) -> Result<LabeledTree> {
    WilsonSampler::new(n, k, variant)?.sample_with_order(order, rng)
}

/// Weights proportional to `first_entry^gamma` (with `0^0 = 1`).
pub fn tree_measure(tree: &LabeledTree, gamma: f64) -> Result<VertexMeasure> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return invalid(format!("gamma must be finite and >= 0, got {gamma}"));
    }
    let mut weights = vec![0.0; tree.n];
    for &v in &tree.order {
        let t = tree.first_entry[v as usize] as f64;
        weights[v as usize] = if gamma == 0.0 { 1.0 } else { t.powf(gamma) };
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return invalid("measure has zero total mass");
    }
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(VertexMeasure { gamma, weights })
}

/// Rescaled branch sizes and attachment ranks for branches `0..=i_max`.
pub fn stick_vector(tree: &LabeledTree, i_max: usize) -> Result<StickVector> {
    if tree.branch_count() < i_max {
        return Err(Error::Range(format!("tree has {} branch ends, need {i_max}", tree.branch_count())));
    }
    let scale = crate::length_scale(tree.n, tree.k);
    let mut y = Vec::with_capacity(i_max + 1);
    let mut z = Vec::with_capacity(i_max + 1);
    y.push(0.0);
    z.push(0.0);
    for i in 1..=i_max {
        y.push((tree.size_at_branch(i) - 1) as f64 / scale);
        let rank = tree.entry_rank(tree.targets[i - 1]).expect("collision targets lie in the tree");
        z.push(rank as f64 / scale);
    }
    Ok(StickVector { k: tree.k, n: tree.n, y, z })
}

/// Sorted edge list `"a-b|c-d|.."` with `a < b` in each edge.
pub fn canonical_tree_code(tree: &LabeledTree) -> Result<String> {
    if !tree.is_spanning() {
        return invalid(format!("tree spans {} of {} vertices", tree.size(), tree.n));
    }
    let mut edges: Vec<(u32, u32)> = tree.edges().into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect();
    edges.sort_unstable();
    Ok(edges.iter().map(|(a, b)| format!("{a}-{b}")).collect::<Vec<_>>().join("|"))
}

/// Pairwise graph distances between the given tree vertices.
pub fn tree_distance_matrix(tree: &LabeledTree, vertices: &[u32]) -> Result<Vec<Vec<u64>>> {
    if let Some(&v) = vertices.iter().find(|&&v| !tree.contains(v)) {
        return invalid(format!("vertex {v} is not in the tree"));
    }
    let depth = tree.depths();
    let dist = |mut a: u32, mut b: u32| -> u64 {
        let mut d = 0;
        while depth[a as usize] > depth[b as usize] {
            a = tree.parent[a as usize];
            d += 1;
        }
        while depth[b as usize] > depth[a as usize] {
            b = tree.parent[b as usize];
            d += 1;
        }
        while a != b {
            a = tree.parent[a as usize];
            b = tree.parent[b as usize];
            d += 2;
        }
        d
    };
    Ok(vertices.iter().map(|&a| vertices.iter().map(|&b| dist(a, b)).collect()).collect())
}

//! Finite multi-period markets: the event tree, claims on its terminal
//! nodes, strategy surfaces, trading gains, and stopping rules.
//!
//! Nodes are stored breadth-first with children in spec order, so every
//! time slice and every sibling group is a contiguous index range.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};
use crate::lp;
use crate::math::{abs, dot, max_abs};
use crate::tolerance::{PROBABILITY_FLOOR, PROBABILITY_SUM_TOL};

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub time: usize,
    pub parent: Option<usize>,
    pub first_child: usize,
    pub child_count: usize,
    /// Reference probability of the edge from the parent (1 at the root).
    pub prob: f64,
}

/// Immutable finite filtered market.
#[derive(Debug, Clone, PartialEq)]
pub struct EventTree {
    horizon: usize,
    assets: usize,
    aux_dim: usize,
    nodes: Vec<Node>,
    prices: Vec<f64>,
    aux: Vec<f64>,
    slices: Vec<usize>,
}

/// Nested description of an explicit tree.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct NodeSpec {
    /// Reference probability of reaching this node from its parent; ignored
    /// at the root.
    #[cfg_attr(feature = "serde", serde(default = "one"))]
    pub p: f64,
    pub price: Vec<f64>,
    /// Non-traded observables (factor levels) usable by claims.
    #[cfg_attr(feature = "serde", serde(default))]
    pub aux: Vec<f64>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub children: Vec<NodeSpec>,
}

#[cfg(feature = "serde")]
fn one() -> f64 {
    1.0
}

impl NodeSpec {
    pub fn leaf(p: f64, price: Vec<f64>) -> Self {
        Self {
            p,
            price,
            aux: Vec::new(),
            children: Vec::new(),
        }
    }

    pub fn with_children(p: f64, price: Vec<f64>, children: Vec<NodeSpec>) -> Self {
        Self {
            p,
            price,
            aux: Vec::new(),
            children,
        }
    }
}

/// Which nodes of the tree a per-node report refers to.
#[derive(Debug, Clone, PartialEq)]
pub struct ArbitrageReport {
    /// One flag per node; terminal nodes are always `true`.
    pub nodes: Vec<bool>,
    pub arbitrage_free: bool,
}

impl ArbitrageReport {
    pub fn first_violation(&self) -> Option<usize> {
        self.nodes.iter().position(|ok| !ok)
    }
}

impl EventTree {
    /// Build and validate a tree from a nested spec.
    pub fn from_spec(horizon: usize, assets: usize, root: &NodeSpec) -> Result<Self> {
        if assets == 0 {
            return Err(Error::InvalidArgument("at least one asset is required".into()));
        }
        let aux_dim = root.aux.len();
        let mut nodes = Vec::new();
        let mut prices = Vec::new();
        let mut aux = Vec::new();
        let mut queue: Vec<(&NodeSpec, Option<usize>, usize)> = vec![(root, None, 0)];
        let mut head = 0;
        while head < queue.len() {
            let (spec, parent, time) = queue[head];
            let id = head;
            head += 1;
            if spec.price.len() != assets {
                return Err(Error::InvalidTree {
                    node: id,
                    reason: format!("price vector has {} entries, expected {}", spec.price.len(), assets),
                });
            }
            if spec.aux.len() != aux_dim {
                return Err(Error::InvalidTree {
                    node: id,
                    reason: format!("aux vector has {} entries, expected {}", spec.aux.len(), aux_dim),
                });
            }
            if spec.price.iter().chain(&spec.aux).any(|x| !x.is_finite()) {
                return Err(Error::InvalidTree {
                    node: id,
                    reason: "non-finite price".into(),
                });
            }
            let k = spec.children.len();
            if time < horizon && k < 2 {
                return Err(Error::InvalidTree {
                    node: id,
                    reason: format!("non-terminal node at t={} has {} children (need at least 2)", time, k),
                });
            }
            if time == horizon && k > 0 {
                return Err(Error::InvalidTree {
                    node: id,
                    reason: format!("node at horizon t={} has children", horizon),
                });
            }
            if k > 0 {
                let sum: f64 = spec.children.iter().map(|c| c.p).sum();
                if abs(sum - 1.0) > PROBABILITY_SUM_TOL {
                    return Err(Error::ProbabilitySum { node: id, sum });
                }
                if let Some(c) = spec.children.iter().find(|c| !(c.p >= PROBABILITY_FLOOR)) {
                    return Err(Error::InvalidTree {
                        node: id,
                        reason: format!("child probability {} below floor {:e}", c.p, PROBABILITY_FLOOR),
                    });
                }
            }
            let first_child = queue.len();
            for c in &spec.children {
                queue.push((c, Some(id), time + 1));
            }
            nodes.push(Node {
                time,
                parent,
                first_child,
                child_count: k,
                prob: if parent.is_some() { spec.p } else { 1.0 },
            });
            prices.extend_from_slice(&spec.price);
            aux.extend_from_slice(&spec.aux);
        }
        Ok(Self::assemble(horizon, assets, aux_dim, nodes, prices, aux))
    }

    /// Assemble from breadth-first node arrays already known to be valid.
    pub(crate) fn assemble(horizon: usize, assets: usize, aux_dim: usize, nodes: Vec<Node>, prices: Vec<f64>, aux: Vec<f64>) -> Self {
        let mut slices = vec![0; horizon + 2];
        for t in 0..=horizon {
            slices[t + 1] = slices[t] + nodes[slices[t]..].iter().take_while(|n| n.time == t).count();
        }
        Self {
            horizon,
            assets,
            aux_dim,
            nodes,
            prices,
            aux,
            slices,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn assets(&self) -> usize {
        self.assets
    }

    pub fn aux_dim(&self) -> usize {
        self.aux_dim
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn price(&self, id: usize) -> &[f64] {
        &self.prices[id * self.assets..(id + 1) * self.assets]
    }

    pub fn aux(&self, id: usize) -> &[f64] {
        &self.aux[id * self.aux_dim..(id + 1) * self.aux_dim]
    }

    pub fn children(&self, id: usize) -> Range<usize> {
        let n = &self.nodes[id];
        n.first_child..n.first_child + n.child_count
    }

    pub fn is_terminal(&self, id: usize) -> bool {
        self.nodes[id].child_count == 0
    }

    /// Node ids at time `t`.
    pub fn slice(&self, t: usize) -> Range<usize> {
        self.slices[t]..self.slices[t + 1]
    }

    pub fn terminals(&self) -> Range<usize> {
        self.slice(self.horizon)
    }

    pub fn terminal_count(&self) -> usize {
        self.terminals().len()
    }

    /// Non-terminal node ids in backward order (latest slice first).
    pub fn backward(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.horizon).rev().flat_map(move |t| self.slice(t))
    }

    /// Reference probabilities over the children of `id`.
    pub fn reference_kernel(&self, id: usize) -> Vec<f64> {
        self.children(id).map(|c| self.nodes[c].prob).collect()
    }

    /// Row-major `k × d` matrix of the price increments to each child.
    pub fn increments(&self, id: usize) -> Vec<f64> {
        let s = self.price(id);
        let mut out = Vec::with_capacity(self.nodes[id].child_count * self.assets);
        for c in self.children(id) {
            out.extend(self.price(c).iter().zip(s).map(|(a, b)| a - b));
        }
        out
    }

    /// Root-to-node path, root first.
    pub fn path(&self, id: usize) -> Vec<usize> {
        let mut p = vec![id];
        let mut cur = id;
        while let Some(par) = self.nodes[cur].parent {
            p.push(par);
            cur = par;
        }
        p.reverse();
        p
    }

    pub fn is_ancestor_or_self(&self, ancestor: usize, mut node: usize) -> bool {
        loop {
            if node == ancestor {
                return true;
            }
            match self.nodes[node].parent {
                Some(p) => node = p,
                None => return false,
            }
        }
    }

    /// Per-node check that 0 lies in the relative interior of the convex hull
    /// of the children's price increments.
    pub fn validate_no_arbitrage(&self) -> ArbitrageReport {
        let nodes: Vec<bool> = (0..self.len())
            .map(|id| {
                if self.is_terminal(id) {
                    true
                } else {
                    lp::admits_positive_martingale(&self.increments(id), self.assets, self.nodes[id].child_count)
                }
            })
            .collect();
        let arbitrage_free = nodes.iter().all(|x| *x);
        ArbitrageReport { nodes, arbitrage_free }
    }

    /// Probability of every node under the measure given by per-edge
    /// probabilities (`edge[id]` = probability of the edge into `id`).
    pub fn marginals(&self, edge: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        out[0] = 1.0;
        for id in 1..self.len() {
            let p = self.nodes[id].parent.unwrap_or(0);
            out[id] = out[p] * edge[id];
        }
        out
    }

    /// Backward conditional expectation of terminal values under per-edge
    /// probabilities.
    pub fn conditional_expectation(&self, edge: &[f64], terminal: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.len()];
        let first = self.terminals().start;
        for (i, x) in terminal.iter().enumerate() {
            v[first + i] = *x;
        }
        for id in self.backward() {
            v[id] = self.children(id).map(|c| edge[c] * v[c]).sum();
        }
        v
    }

    /// Expectation of a per-terminal quantity under per-edge probabilities.
    pub fn expectation(&self, edge: &[f64], terminal: &[f64]) -> f64 {
        let m = self.marginals(edge);
        self.terminals().zip(terminal).map(|(id, x)| m[id] * x).sum()
    }
}

/// Claim paying `payoff[i]` at the `i`-th terminal node.
#[derive(Debug, Clone, PartialEq)]
pub struct Claim {
    payoff: Vec<f64>,
}

impl Claim {
    pub fn new(tree: &EventTree, payoff: Vec<f64>) -> Result<Self> {
        if payoff.len() != tree.terminal_count() {
            return Err(Error::Dimension(format!(
                "claim has {} values for {} terminal nodes",
                payoff.len(),
                tree.terminal_count()
            )));
        }
        if let Some(i) = payoff.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!("claim value at terminal {} is not finite", i)));
        }
        Ok(Self { payoff })
    }

    /// Claim from a function of the terminal (prices, aux values).
    pub fn from_fn(tree: &EventTree, mut f: impl FnMut(&[f64], &[f64]) -> f64) -> Result<Self> {
        let payoff = tree.terminals().map(|id| f(tree.price(id), tree.aux(id))).collect();
        Self::new(tree, payoff)
    }

    pub fn constant(tree: &EventTree, b: f64) -> Self {
        Self {
            payoff: vec![b; tree.terminal_count()],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.payoff
    }

    pub fn sup_norm(&self) -> f64 {
        max_abs(&self.payoff)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            payoff: self.payoff.iter().map(|x| f(*x)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Claim, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            payoff: self.payoff.iter().zip(&other.payoff).map(|(a, b)| f(*a, *b)).collect(),
        }
    }

    pub fn scaled(&self, beta: f64) -> Self {
        self.map(|x| beta * x)
    }
}

/// Per-node strategy vectors; entries at terminal nodes are unused and zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    assets: usize,
    values: Vec<f64>,
}

impl Strategy {
    pub fn zeros(tree: &EventTree) -> Self {
        Self {
            assets: tree.assets(),
            values: vec![0.0; tree.len() * tree.assets()],
        }
    }

    pub fn constant(tree: &EventTree, theta: &[f64]) -> Self {
        let mut s = Self::zeros(tree);
        for id in 0..tree.len() {
            if !tree.is_terminal(id) {
                s.set(id, theta);
            }
        }
        s
    }

    pub fn from_fn(tree: &EventTree, mut f: impl FnMut(usize) -> Vec<f64>) -> Self {
        let mut s = Self::zeros(tree);
        for id in 0..tree.len() {
            if !tree.is_terminal(id) {
                s.set(id, &f(id));
            }
        }
        s
    }

    pub fn assets(&self) -> usize {
        self.assets
    }

    pub fn get(&self, id: usize) -> &[f64] {
        &self.values[id * self.assets..(id + 1) * self.assets]
    }

    pub fn set(&mut self, id: usize, theta: &[f64]) {
        self.values[id * self.assets..(id + 1) * self.assets].copy_from_slice(theta);
    }

    pub fn raw(&self) -> &[f64] {
        &self.values
    }

    pub fn difference(&self, other: &Strategy) -> Strategy {
        Strategy {
            assets: self.assets,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn add(&self, other: &Strategy) -> Strategy {
        Strategy {
            assets: self.assets,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.values)
    }
}

/// Cumulative trading gains `G_{0,t}(ϑ)` at every node.
pub fn gains(tree: &EventTree, strategy: &Strategy) -> Vec<f64> {
    let mut g = vec![0.0; tree.len()];
    for id in 0..tree.len() {
        if tree.is_terminal(id) {
            continue;
        }
        let theta = strategy.get(id);
        let s = tree.price(id);
        for c in tree.children(id) {
            let inc: f64 = tree.price(c).iter().zip(s).zip(theta).map(|((a, b), th)| th * (a - b)).sum();
            g[c] = g[id] + inc;
        }
    }
    g
}

/// Gains realized at the terminal nodes, in terminal order.
pub fn terminal_gains(tree: &EventTree, strategy: &Strategy) -> Vec<f64> {
    let g = gains(tree, strategy);
    g[tree.terminals()].to_vec()
}

/// A stopping rule encoded as an antichain of node ids that every
/// root-to-terminal path crosses exactly once.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppingRule {
    member: Vec<bool>,
    /// For each node, the stopping node on its path if it lies at or after the
    /// rule, `None` if the node is strictly before it.
    stop_of: Vec<Option<usize>>,
}

impl StoppingRule {
    pub fn new(tree: &EventTree, nodes: &[usize]) -> Result<Self> {
        let mut member = vec![false; tree.len()];
        for &id in nodes {
            if id >= tree.len() {
                return Err(Error::InvalidStoppingRule(format!("node {} out of range", id)));
            }
            member[id] = true;
        }
        let mut stop_of: Vec<Option<usize>> = vec![None; tree.len()];
        for id in 0..tree.len() {
            let inherited = tree.node(id).parent.and_then(|p| stop_of[p]);
            if member[id] {
                if let Some(s) = inherited {
                    return Err(Error::InvalidStoppingRule(format!("nodes {} and {} lie on one path", s, id)));
                }
                stop_of[id] = Some(id);
            } else {
                stop_of[id] = inherited;
            }
        }
        if let Some(t) = tree.terminals().find(|t| stop_of[*t].is_none()) {
            return Err(Error::InvalidStoppingRule(format!("path to terminal node {} is never stopped", t)));
        }
        Ok(Self { member, stop_of })
    }

    /// The deterministic time `t`.
    pub fn at_time(tree: &EventTree, t: usize) -> Self {
        let ids: Vec<usize> = tree.slice(t.min(tree.horizon())).collect();
        Self::new(tree, &ids).expect("a full time slice is a stopping rule")
    }

    /// Random antichain: from the root, stop at each node with probability
    /// `stop_prob` (always at terminal nodes).
    pub fn random(tree: &EventTree, stop_prob: f64, rng: &mut impl rand::Rng) -> Self {
        let mut ids = Vec::new();
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            if tree.is_terminal(id) || rng.gen::<f64>() < stop_prob {
                ids.push(id);
            } else {
                stack.extend(tree.children(id).rev());
            }
        }
        ids.sort_unstable();
        Self::new(tree, &ids).expect("random antichain is valid by construction")
    }

    pub fn contains(&self, id: usize) -> bool {
        self.member[id]
    }

    pub fn nodes(&self) -> Vec<usize> {
        (0..self.member.len()).filter(|i| self.member[*i]).collect()
    }

    /// True if `id` lies strictly before the rule on its path.
    pub fn is_before(&self, id: usize) -> bool {
        self.stop_of[id].is_none()
    }

    /// The stopping node on the path through `id` (for ids at or after it).
    pub fn stop_of(&self, id: usize) -> Option<usize> {
        self.stop_of[id]
    }

    /// Stopping node reached by the path ending at terminal `id`.
    pub fn stop_of_terminal(&self, id: usize) -> usize {
        self.stop_of[id].expect("every path is stopped")
    }

    /// Whether `self ≤ other` pathwise.
    pub fn precedes(&self, tree: &EventTree, other: &StoppingRule) -> bool {
        tree.terminals()
            .all(|t| tree.is_ancestor_or_self(self.stop_of_terminal(t), other.stop_of_terminal(t)))
    }

    /// Pathwise minimum of two rules.
    pub fn earlier(&self, tree: &EventTree, other: &StoppingRule) -> StoppingRule {
        let mut ids: Vec<usize> = tree
            .terminals()
            .map(|t| {
                let (a, b) = (self.stop_of_terminal(t), other.stop_of_terminal(t));
                if tree.is_ancestor_or_self(a, b) {
                    a
                } else {
                    b
                }
            })
            .collect();
        ids.sort_unstable();
        ids.dedup();
        Self::new(tree, &ids).expect("the minimum of two stopping rules is a stopping rule")
    }
}

/// Human-readable one-line summary used by reports.
pub fn describe(tree: &EventTree) -> String {
    format!(
        "{} nodes, horizon {}, {} asset(s), {} terminal states",
        tree.len(),
        tree.horizon(),
        tree.assets(),
        tree.terminal_count()
    )
}

/// Σ_i q_i (ϑ·ΔS_i) at one node; zero for martingale kernels.
pub fn one_step_drift(increments: &[f64], kernel: &[f64], theta: &[f64]) -> f64 {
    let d = theta.len();
    kernel
        .iter()
        .enumerate()
        .map(|(i, q)| q * dot(theta, &increments[i * d..(i + 1) * d]))
        .sum()
}

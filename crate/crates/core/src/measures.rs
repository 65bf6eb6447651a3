//! Equivalent martingale measures as one-step kernels: the entropic
//! I-projection, the minimal entropy martingale measure (optionally tilted by
//! a claim), density processes and relative entropy.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::lp;
use crate::math::{self, dot, ln, log_sum_exp, max_abs, tilted_weights, weighted_mean, weighted_second_moment};
use crate::tolerance::{NEWTON_MAX_ITER, NEWTON_TOL, RANK_TOL};
use crate::tree::{gains, EventTree, Strategy};

/// A measure on the tree given by its per-edge conditional probabilities
/// (`edge[id]` is the probability of moving from the parent of `id` to `id`).
#[derive(Debug, Clone, PartialEq)]
pub struct Measure {
    edge: Vec<f64>,
    martingale: bool,
}

impl Measure {
    /// The reference measure P of the tree.
    pub fn reference(tree: &EventTree) -> Self {
        let edge: Vec<f64> = tree.nodes().iter().map(|n| n.prob).collect();
        let mut m = Self { edge, martingale: false };
        m.martingale = m.martingale_residual(tree) <= 1e-9;
        m
    }

    /// Build from per-node kernels; each must be strictly positive and sum
    /// to one.
    pub fn from_kernels(tree: &EventTree, mut kernel: impl FnMut(usize) -> Vec<f64>) -> Result<Self> {
        let mut edge = vec![0.0; tree.len()];
        edge[0] = 1.0;
        for id in 0..tree.len() {
            if tree.is_terminal(id) {
                continue;
            }
            let q = kernel(id);
            if q.len() != tree.node(id).child_count {
                return Err(Error::Dimension(alloc::format!("kernel at node {} has wrong length", id)));
            }
            let s: f64 = q.iter().sum();
            if q.iter().any(|x| !(*x > 0.0)) || math::abs(s - 1.0) > 1e-10 {
                return Err(Error::InvalidArgument(alloc::format!("kernel at node {} is not a strictly positive probability vector", id)));
            }
            for (c, x) in tree.children(id).zip(q) {
                edge[c] = x;
            }
        }
        let mut m = Self { edge, martingale: false };
        m.martingale = m.martingale_residual(tree) <= 1e-9;
        Ok(m)
    }

    pub fn edge(&self) -> &[f64] {
        &self.edge
    }

    pub fn kernel(&self, tree: &EventTree, id: usize) -> Vec<f64> {
        self.edge[tree.children(id)].to_vec()
    }

    pub fn is_martingale(&self) -> bool {
        self.martingale
    }

    /// Largest |E_q[ΔS]| over all nodes.
    pub fn martingale_residual(&self, tree: &EventTree) -> f64 {
        let d = tree.assets();
        (0..tree.len())
            .filter(|id| !tree.is_terminal(*id))
            .map(|id| max_abs(&weighted_mean(&self.edge[tree.children(id)], &tree.increments(id), d)))
            .fold(0.0, f64::max)
    }

    /// Unconditional probability of every node.
    pub fn marginals(&self, tree: &EventTree) -> Vec<f64> {
        tree.marginals(&self.edge)
    }

    /// `E[X | node]` for a terminal random variable.
    pub fn conditional_expectation(&self, tree: &EventTree, terminal: &[f64]) -> Vec<f64> {
        tree.conditional_expectation(&self.edge, terminal)
    }
}

/// Solution of one entropic projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub kernel: Vec<f64>,
    pub multiplier: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// |Σ q ΔS|_∞ at the solution.
    pub residual: f64,
    /// Rank of the increment matrix; below `d` the multiplier is the
    /// minimal-norm root.
    pub rank: usize,
}

impl Projection {
    pub fn is_degenerate(&self, assets: usize) -> bool {
        self.rank < assets
    }
}

/// Minimize `Σ q_i (log(q_i/p_i) + cost_i)` over strictly positive kernels
/// with `Σ q_i ΔS_i = 0`. The optimizer is the exponential tilt
/// `q_i ∝ p_i exp(−cost_i + λ·ΔS_i)`, with `λ` found by damped Newton on the
/// convex dual `λ ↦ log Σ p_i exp(−cost_i + λ·ΔS_i)`.
pub fn entropic_projection(p: &[f64], increments: &[f64], d: usize, cost: &[f64]) -> Result<Projection> {
    let k = p.len();
    if increments.len() != k * d || cost.len() != k {
        return Err(Error::Dimension("entropic projection inputs".into()));
    }
    let base: Vec<f64> = cost.iter().map(|c| -c).collect();
    // Constraint tolerances are relative to the size of the moves.
    let scale = match max_abs(increments) { m if m > 0.0 => m, _ => 1.0 };
    let (projector, rank) = math::row_space_projector(increments, d, RANK_TOL);
    let mut lambda = vec![0.0; d];
    let exponents = |lambda: &[f64]| -> Vec<f64> { (0..k).map(|i| base[i] + dot(lambda, &increments[i * d..(i + 1) * d])).collect() };
    if rank == 0 {
        let q = tilted_weights(p, &base);
        return Ok(Projection {
            value: -log_sum_exp(p, &base),
            kernel: q,
            multiplier: lambda,
            iterations: 0,
            residual: 0.0,
            rank,
        });
    }
    let mut iterations = 0;
    let mut residual;
    loop {
        let x = exponents(&lambda);
        let q = tilted_weights(p, &x);
        let g = weighted_mean(&q, increments, d);
        residual = max_abs(&g);
        if residual <= NEWTON_TOL * scale {
            let value = -log_sum_exp(p, &x);
            return Ok(Projection {
                kernel: q,
                multiplier: lambda,
                value,
                iterations,
                residual,
                rank,
            });
        }
        if iterations >= NEWTON_MAX_ITER {
            break;
        }
        iterations += 1;
        let h = weighted_second_moment(&q, increments, d, &g);
        let mut step = math::damped_newton_direction(&h, &projector, d, &g);
        step.iter_mut().for_each(|s| *s = -*s);
        cap_exponent_change(&mut step, increments, d, 1.0);
        let f0 = log_sum_exp(p, &x);
        let slope = dot(&g, &step);
        // Near the optimum the predicted decrease drops below the rounding
        // of the objective; the full Newton step is then taken as is.
        let tiny = -slope <= 64.0 * f64::EPSILON * math::abs(f0).max(1.0);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            if tiny {
                lambda.iter_mut().zip(&step).for_each(|(a, s)| *a += s);
                accepted = true;
                break;
            }
            let trial: Vec<f64> = lambda.iter().zip(&step).map(|(l, s)| l + t * s).collect();
            let f1 = log_sum_exp(p, &exponents(&trial));
            if f1 <= f0 + 1e-4 * t * slope + 4.0 * f64::EPSILON * math::abs(f0) {
                lambda = trial;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if !lp::admits_positive_martingale(increments, d, k) {
        return Err(Error::NoArbitrageViolated { node: 0 });
    }
    Err(Error::NewtonFailed {
        node: 0,
        iterations,
        residual,
    })
}

/// Largest exponent change a single Newton step may cause. Far from the
/// optimum the quadratic model is meaningless and an uncapped step can push
/// every tilted weight but one below underflow.
const MAX_EXPONENT_STEP: f64 = 20.0;

/// Shrink `step` so that no exponent `factor·step·ΔS_i` moves by more than
/// [`MAX_EXPONENT_STEP`].
pub(crate) fn cap_exponent_change(step: &mut [f64], increments: &[f64], d: usize, factor: f64) {
    let k = increments.len() / d.max(1);
    let change = (0..k).map(|i| math::abs(factor * dot(step, &increments[i * d..(i + 1) * d]))).fold(0.0, f64::max);
    if change > MAX_EXPONENT_STEP {
        let shrink = MAX_EXPONENT_STEP / change;
        step.iter_mut().for_each(|s| *s *= shrink);
    }
}

/// Output of the backward entropy recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyResult {
    pub measure: Measure,
    /// Optimal cost-to-go at every node (nats).
    pub value: Vec<f64>,
    /// Per-node Lagrange multipliers, row-major `nodes × d` (zero at
    /// terminal nodes).
    pub multipliers: Vec<f64>,
    pub assets: usize,
    pub newton_iterations: usize,
    pub max_residual: f64,
}

impl EntropyResult {
    /// `c_E = exp(J_root)`.
    pub fn c_e(&self) -> f64 {
        math::exp(self.value[0])
    }

    /// Root value; for zero terminal cost this is `H(Q^E | P)`.
    pub fn root_value(&self) -> f64 {
        self.value[0]
    }

    /// The integrand `ϑ^E` of the density representation.
    pub fn theta_e(&self, tree: &EventTree) -> Strategy {
        let d = self.assets;
        Strategy::from_fn(tree, |id| self.multipliers[id * d..(id + 1) * d].to_vec())
    }
}

/// Backward recursion of entropic projections. Zero terminal cost yields the
/// minimal entropy martingale measure; terminal cost `−αB` yields the
/// claim-tilted measure `Q^{E,B}`.
pub fn minimal_entropy_measure(tree: &EventTree, terminal_cost: &[f64]) -> Result<EntropyResult> {
    if terminal_cost.len() != tree.terminal_count() {
        return Err(Error::Dimension("terminal cost length".into()));
    }
    let d = tree.assets();
    let mut value = vec![0.0; tree.len()];
    let mut multipliers = vec![0.0; tree.len() * d];
    let mut edge = vec![0.0; tree.len()];
    edge[0] = 1.0;
    let first = tree.terminals().start;
    for (i, c) in terminal_cost.iter().enumerate() {
        value[first + i] = *c;
    }
    let mut newton_iterations = 0;
    let mut max_residual: f64 = 0.0;
    for id in tree.backward() {
        let p = tree.reference_kernel(id);
        let inc = tree.increments(id);
        let cost: Vec<f64> = tree.children(id).map(|c| value[c]).collect();
        let proj = entropic_projection(&p, &inc, d, &cost).map_err(|e| e.at_node(id))?;
        value[id] = proj.value;
        multipliers[id * d..(id + 1) * d].copy_from_slice(&proj.multiplier);
        for (c, q) in tree.children(id).zip(&proj.kernel) {
            edge[c] = *q;
        }
        newton_iterations += proj.iterations;
        max_residual = max_residual.max(proj.residual);
    }
    Ok(EntropyResult {
        measure: Measure { edge, martingale: true },
        value,
        multipliers,
        assets: d,
        newton_iterations,
        max_residual,
    })
}

/// Density process of `measure` with respect to `reference`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensitySurface {
    /// `Z` at every node (path product of kernel ratios).
    pub z: Vec<f64>,
    /// One-step ratio `q/p` on the edge into every node (1 at the root).
    pub ratio: Vec<f64>,
}

impl DensitySurface {
    /// Largest |E_ref[Z_{t+1} | node] − Z_node| over all non-terminal nodes.
    pub fn martingale_defect(&self, tree: &EventTree, reference: &Measure) -> f64 {
        (0..tree.len())
            .filter(|id| !tree.is_terminal(*id))
            .map(|id| {
                let e: f64 = tree.children(id).map(|c| reference.edge[c] * self.z[c]).sum();
                math::abs(e - self.z[id])
            })
            .fold(0.0, f64::max)
    }
}

pub fn density_process(tree: &EventTree, measure: &Measure, reference: &Measure) -> DensitySurface {
    let mut z = vec![1.0; tree.len()];
    let mut ratio = vec![1.0; tree.len()];
    for id in 1..tree.len() {
        let parent = tree.node(id).parent.unwrap_or(0);
        ratio[id] = measure.edge[id] / reference.edge[id];
        z[id] = z[parent] * ratio[id];
    }
    DensitySurface { z, ratio }
}

/// `H(Q | R) = Σ_terminal Q(path) log Z^{Q:R}`, in nats.
pub fn relative_entropy(tree: &EventTree, measure: &Measure, reference: &Measure) -> f64 {
    let mut log_z = vec![0.0; tree.len()];
    for id in 1..tree.len() {
        let parent = tree.node(id).parent.unwrap_or(0);
        log_z[id] = log_z[parent] + ln(measure.edge[id] / reference.edge[id]);
    }
    let q = measure.marginals(tree);
    tree.terminals().map(|id| q[id] * log_z[id]).sum()
}

/// `E_Q[Σ_steps H(q_node | r_node)]`, the per-step decomposition of the
/// relative entropy.
pub fn entropy_by_steps(tree: &EventTree, measure: &Measure, reference: &Measure) -> f64 {
    let q = measure.marginals(tree);
    (0..tree.len())
        .filter(|id| !tree.is_terminal(*id))
        .map(|id| {
            let h: f64 = tree
                .children(id)
                .map(|c| measure.edge[c] * ln(measure.edge[c] / reference.edge[c]))
                .sum();
            q[id] * h
        })
        .sum()
}

/// Largest |log Z^E_T − J_root − G_T(ϑ^E)| over terminal nodes.
pub fn verify_entropy_structure(tree: &EventTree, result: &EntropyResult) -> f64 {
    let density = density_process(tree, &result.measure, &Measure::reference(tree));
    let g = gains(tree, &result.theta_e(tree));
    tree.terminals()
        .map(|id| math::abs(ln(density.z[id]) - result.root_value() - g[id]))
        .fold(0.0, f64::max)
}

/// Largest |E_{Q^E}[log(Z_T/Z_t) | node] − (J_root + G_t(ϑ^E) − log Z_t)|:
/// the dynamic form of the density representation.
pub fn verify_dynamic_entropy(tree: &EventTree, result: &EntropyResult) -> f64 {
    let density = density_process(tree, &result.measure, &Measure::reference(tree));
    let g = gains(tree, &result.theta_e(tree));
    let log_terminal: Vec<f64> = tree.terminals().map(|id| ln(density.z[id])).collect();
    let cond = result.measure.conditional_expectation(tree, &log_terminal);
    (0..tree.len())
        .map(|id| {
            let lhs = cond[id] - ln(density.z[id]);
            let rhs = result.root_value() + g[id] - ln(density.z[id]);
            math::abs(lhs - rhs)
        })
        .fold(0.0, f64::max)
}

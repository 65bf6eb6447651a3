//! Orthogonal decompositions of value processes under `Q^E`.
//!
//! Two routes produce a [`BsdeSolution`]: the explicit backward scheme for
//! the quadratic equation `dY = ψ dS + dL − (α/2) d⟨L⟩`, and the exact
//! Doob–Meyer/GKW split of the primal value process. Both satisfy the edge
//! identity `Y_child = Y_node − ΔA + ψ·ΔS + ΔL` exactly.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{self, dot, pinv_solve, weighted_mean, weighted_second_moment};
use crate::measures::Measure;
use crate::report::{Check, Report};
use crate::tolerance::{Tolerances, RANK_TOL};
use crate::tree::{Claim, EventTree, Strategy};
use crate::valuation::{indifference_surface, Route, ValuationSurface};

/// One-step Galtchouk–Kunita–Watanabe projection.
#[derive(Debug, Clone, PartialEq)]
pub struct GkwStep {
    pub mean: f64,
    pub psi: Vec<f64>,
    /// Orthogonal residual per child.
    pub dl: Vec<f64>,
}

/// Project the child values `v` onto the span of the increments under `q`.
/// The normal equations use raw second moments `E_q[ΔS ΔSᵀ]`; with rank
/// deficiency the minimal-norm `ψ` is returned.
pub fn gkw_step(q: &[f64], increments: &[f64], d: usize, v: &[f64]) -> GkwStep {
    let k = q.len();
    let mean: f64 = q.iter().zip(v).map(|(a, b)| a * b).sum();
    let zero = vec![0.0; d];
    let moment = weighted_second_moment(q, increments, d, &zero);
    let centered: Vec<f64> = v.iter().map(|x| x - mean).collect();
    let mut rhs = vec![0.0; d];
    for i in 0..k {
        for j in 0..d {
            rhs[j] += q[i] * centered[i] * increments[i * d + j];
        }
    }
    let (mut psi, _) = pinv_solve(&moment, d, &rhs, RANK_TOL);
    let residual = |psi: &[f64]| -> Vec<f64> { (0..k).map(|i| centered[i] - dot(psi, &increments[i * d..(i + 1) * d])).collect() };
    // One round of iterative refinement: nearly collinear increments make
    // the normal equations lose orthogonality to rounding.
    let r = residual(&psi);
    let mut rhs = vec![0.0; d];
    for i in 0..k {
        for j in 0..d {
            rhs[j] += q[i] * r[i] * increments[i * d + j];
        }
    }
    let (correction, _) = pinv_solve(&moment, d, &rhs, RANK_TOL);
    psi.iter_mut().zip(&correction).for_each(|(p, c)| *p += c);
    let dl = residual(&psi);
    GkwStep { mean, psi, dl }
}

/// Solution triple `(Y, ψ, L)` with its compensator and brackets. Per-edge
/// arrays are indexed by the child node id (entry 0 is unused).
#[derive(Debug, Clone, PartialEq)]
pub struct BsdeSolution {
    pub route: Route,
    pub alpha: f64,
    pub values: Vec<f64>,
    pub psi: Strategy,
    pub dl: Vec<f64>,
    /// Compensator increment `ΔA = Y_node − E_{Q^E}[Y_child]` on each edge.
    pub da: Vec<f64>,
    /// Cumulative compensator `A` per node.
    pub compensator: Vec<f64>,
    /// Cumulative bracket `⟨L⟩` per node as used by the route: the
    /// conditional second moment for the scheme, `(2/α)·A` for the exact
    /// decomposition.
    pub qv_l: Vec<f64>,
    /// Cumulative `Σ E_{Q^E}[(ΔL)² | node]`.
    pub qv_l_predictable: Vec<f64>,
    /// Cumulative `Σ (ΔL)²` along the path.
    pub qv_l_optional: Vec<f64>,
}

impl BsdeSolution {
    pub fn surface(&self) -> ValuationSurface {
        ValuationSurface {
            values: self.values.clone(),
            alpha: self.alpha,
            route: self.route,
        }
    }

    /// `Y_child − Y_node` on the edge into `child`.
    pub fn dy(&self, tree: &EventTree, child: usize) -> f64 {
        let parent = tree.node(child).parent.unwrap_or(0);
        self.values[child] - self.values[parent]
    }

    /// `ψ·ΔS` on the edge into `child`.
    pub fn psi_ds(&self, tree: &EventTree, child: usize) -> f64 {
        let parent = tree.node(child).parent.unwrap_or(0);
        let s = tree.price(parent);
        self.psi
            .get(parent)
            .iter()
            .zip(tree.price(child).iter().zip(s))
            .map(|(p, (a, b))| p * (a - b))
            .sum()
    }
}

fn assemble(tree: &EventTree, route: Route, alpha: f64, values: Vec<f64>, qe: &Measure) -> BsdeSolution {
    let n = tree.len();
    let d = tree.assets();
    let mut psi = Strategy::zeros(tree);
    let mut dl = vec![0.0; n];
    let mut da = vec![0.0; n];
    let mut dqv = vec![0.0; n];
    let mut dqv_pred = vec![0.0; n];
    for id in 0..n {
        if tree.is_terminal(id) {
            continue;
        }
        let q = qe.kernel(tree, id);
        let v: Vec<f64> = tree.children(id).map(|c| values[c]).collect();
        let step = gkw_step(&q, &tree.increments(id), d, &v);
        psi.set(id, &step.psi);
        let pred: f64 = q.iter().zip(&step.dl).map(|(a, l)| a * l * l).sum();
        let a = values[id] - step.mean;
        let bracket = match route {
            Route::BsdeScheme => pred,
            _ => 2.0 * a / alpha,
        };
        for (i, c) in tree.children(id).enumerate() {
            dl[c] = step.dl[i];
            da[c] = a;
            dqv[c] = bracket;
            dqv_pred[c] = pred;
        }
    }
    let mut compensator = vec![0.0; n];
    let mut qv_l = vec![0.0; n];
    let mut qv_l_predictable = vec![0.0; n];
    let mut qv_l_optional = vec![0.0; n];
    for id in 1..n {
        let p = tree.node(id).parent.unwrap_or(0);
        compensator[id] = compensator[p] + da[id];
        qv_l[id] = qv_l[p] + dqv[id];
        qv_l_predictable[id] = qv_l_predictable[p] + dqv_pred[id];
        qv_l_optional[id] = qv_l_optional[p] + dl[id] * dl[id];
    }
    BsdeSolution {
        route,
        alpha,
        values,
        psi,
        dl,
        da,
        compensator,
        qv_l,
        qv_l_predictable,
        qv_l_optional,
    }
}

/// Explicit backward scheme: `Y_node = E[Y_child] + (α/2) E[(ΔL)²]` with
/// `ΔL` the GKW residual of the child values.
pub fn bsde_scheme(tree: &EventTree, claim: &Claim, alpha: f64, qe: &Measure) -> Result<BsdeSolution> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("risk aversion must be positive, got {}", alpha)));
    }
    let d = tree.assets();
    let mut values = vec![0.0; tree.len()];
    for (id, b) in tree.terminals().zip(claim.values()) {
        values[id] = *b;
    }
    for id in tree.backward() {
        let q = qe.kernel(tree, id);
        let v: Vec<f64> = tree.children(id).map(|c| values[c]).collect();
        let step = gkw_step(&q, &tree.increments(id), d, &v);
        let pred: f64 = q.iter().zip(&step.dl).map(|(a, l)| a * l * l).sum();
        values[id] = step.mean + 0.5 * alpha * pred;
    }
    Ok(assemble(tree, Route::BsdeScheme, alpha, values, qe))
}

/// GKW split of an exact value surface (primal or dual route) into
/// integral, orthogonal part and compensator.
pub fn exact_decomposition(tree: &EventTree, surface: &ValuationSurface, qe: &Measure) -> Result<BsdeSolution> {
    match surface.route {
        Route::Primal | Route::Dual => {}
        other => return Err(Error::InvalidArgument(format!("exact decomposition needs an exact value surface, got route {}", other.as_str()))),
    }
    if surface.values.len() != tree.len() {
        return Err(Error::Dimension("value surface does not match the tree".into()));
    }
    Ok(assemble(tree, Route::Primal, surface.alpha, surface.values.clone(), qe))
}

/// Largest |Y_child − (Y_node − ΔA + ψ·ΔS + ΔL)| over all edges.
pub fn edge_identity_residual(tree: &EventTree, sol: &BsdeSolution) -> f64 {
    (1..tree.len())
        .map(|c| math::abs(sol.dy(tree, c) - (-sol.da[c] + sol.psi_ds(tree, c) + sol.dl[c])))
        .fold(0.0, f64::max)
}

/// Largest |E[ΔL | node]| or |E[ΔL ΔS | node]| component.
pub fn orthogonality_residual(tree: &EventTree, sol: &BsdeSolution, qe: &Measure) -> f64 {
    let d = tree.assets();
    (0..tree.len())
        .filter(|id| !tree.is_terminal(*id))
        .map(|id| {
            let q = qe.kernel(tree, id);
            let dl: Vec<f64> = tree.children(id).map(|c| sol.dl[c]).collect();
            let m: f64 = q.iter().zip(&dl).map(|(a, b)| a * b).sum();
            let w: Vec<f64> = q.iter().zip(&dl).map(|(a, b)| a * b).collect();
            let cross = weighted_mean(&w, &tree.increments(id), d);
            cross.iter().fold(math::abs(m), |acc, x| acc.max(math::abs(*x)))
        })
        .fold(0.0, f64::max)
}

/// `E_{Q^E}[Σ remaining edge quantities | node]` for a per-edge quantity
/// indexed by child id.
pub fn remaining_sum(tree: &EventTree, qe: &Measure, edge: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; tree.len()];
    for id in tree.backward() {
        out[id] = tree.children(id).map(|c| qe.edge()[c] * (edge[c] + out[c])).sum();
    }
    out
}

/// Discrete BMO norms of the two martingale parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BmoReport {
    pub alpha: f64,
    pub bmo_psi: f64,
    /// Based on the route's bracket `⟨L⟩`.
    pub bmo_l: f64,
    /// Based on the conditional second moments of the GKW residuals.
    pub bmo_l_residual: f64,
}

/// Square root of the largest conditional expected remaining bracket.
pub fn bmo_norms(tree: &EventTree, sol: &BsdeSolution, qe: &Measure) -> BmoReport {
    let max_sqrt = |v: Vec<f64>| math::sqrt(v.into_iter().fold(0.0, f64::max).max(0.0));
    let psi_sq: Vec<f64> = (0..tree.len())
        .map(|c| if c == 0 { 0.0 } else { { let x = sol.psi_ds(tree, c); x * x } })
        .collect();
    let increments = |cum: &[f64]| -> Vec<f64> {
        (0..tree.len())
            .map(|c| match tree.node(c).parent {
                Some(p) => cum[c] - cum[p],
                None => 0.0,
            })
            .collect()
    };
    BmoReport {
        alpha: sol.alpha,
        bmo_psi: max_sqrt(remaining_sum(tree, qe, &psi_sq)),
        bmo_l: max_sqrt(remaining_sum(tree, qe, &increments(&sol.qv_l))),
        bmo_l_residual: max_sqrt(remaining_sum(tree, qe, &increments(&sol.qv_l_predictable))),
    }
}

/// Ordered terminal data give ordered solutions on both routes.
pub fn comparison_check(tree: &EventTree, upper: &Claim, lower: &Claim, alpha: f64, qe: &Measure, tol: &Tolerances) -> Result<Report> {
    if let Some(i) = upper.values().iter().zip(lower.values()).position(|(a, b)| a < b) {
        return Err(Error::InvalidArgument(format!("claims are not ordered at terminal {}", i)));
    }
    let e1 = indifference_surface(tree, upper, alpha, qe)?.surface.values;
    let e2 = indifference_surface(tree, lower, alpha, qe)?.surface.values;
    let s1 = bsde_scheme(tree, upper, alpha, qe)?.values;
    let s2 = bsde_scheme(tree, lower, alpha, qe)?.values;
    let mut report = Report::default();
    report.push(Check::inequality(
        "comparison (exact)",
        (0..tree.len()).map(|i| (i, e1[i] - e2[i])),
        tol.constraint,
    ));
    report.push(Check::inequality(
        "comparison (scheme)",
        (0..tree.len()).map(|i| (i, s1[i] - s2[i])),
        tol.constraint,
    ));
    Ok(report)
}

/// Discrete stochastic exponential `Π (1 + (α/2) ΔL)` along each path.
/// Diagnostic only: no identity is asserted for it on trees.
pub fn stochastic_exponential(tree: &EventTree, sol: &BsdeSolution) -> Vec<f64> {
    let mut out = vec![1.0; tree.len()];
    for id in 1..tree.len() {
        let p = tree.node(id).parent.unwrap_or(0);
        out[id] = out[p] * (1.0 + 0.5 * sol.alpha * sol.dl[id]);
    }
    out
}

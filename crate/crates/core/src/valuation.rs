//! Exponential utility indifference values on the tree.
//!
//! The primal route runs the dynamic programming equation under the minimal
//! entropy measure, one log-domain Newton solve per node. The dual route runs
//! two entropic recursions under the reference measure and takes the
//! difference of their values. The two agree up to solver precision.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::lp;
use crate::math::{self, damped_newton_direction, dot, log_sum_exp, max_abs, row_space_projector, mat_vec, tilted_weights, weighted_mean, weighted_second_moment};
use crate::measures::{minimal_entropy_measure, EntropyResult, Measure};
use crate::report::{Check, Report};
use crate::superrep;
use crate::tolerance::{Tolerances, NEWTON_MAX_ITER, NEWTON_TOL, RANK_TOL};
use crate::tree::{gains, Claim, EventTree, StoppingRule, Strategy};

/// Which computation produced a surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Primal,
    Dual,
    BsdeScheme,
    Superrep,
}

impl Route {
    pub fn as_str(&self) -> &'static str {
        match self {
            Route::Primal => "primal",
            Route::Dual => "dual",
            Route::BsdeScheme => "bsde-scheme",
            Route::Superrep => "superrep",
        }
    }
}

/// Per-node values of a claim valuation.
#[derive(Debug, Clone, PartialEq)]
pub struct ValuationSurface {
    pub values: Vec<f64>,
    pub alpha: f64,
    pub route: Route,
}

impl ValuationSurface {
    pub fn root(&self) -> f64 {
        self.values[0]
    }

    pub fn max_abs_diff(&self, other: &ValuationSurface) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| math::abs(a - b))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Diagnostics {
    pub newton_iterations: usize,
    pub max_residual: f64,
}

/// Primal valuation together with the optimal strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct ValuationResult {
    pub surface: ValuationSurface,
    pub strategy: Strategy,
    pub diagnostics: Diagnostics,
}

/// Result of one primal Bellman step.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalStep {
    pub value: f64,
    pub strategy: Vec<f64>,
    pub iterations: usize,
    /// |E_w[ΔS]|_∞ under the optimally tilted weights.
    pub residual: f64,
}

/// `(1/α) log min_ϑ Σ q_i exp(α(cont_i − ϑ·ΔS_i))` and its minimal-norm
/// minimizer. `q` must be a martingale kernel for the increments.
pub fn one_step_primal(q: &[f64], increments: &[f64], d: usize, cont: &[f64], alpha: f64, warm: Option<&[f64]>) -> Result<PrimalStep> {
    let k = q.len();
    if increments.len() != k * d || cont.len() != k {
        return Err(Error::Dimension("one-step primal inputs".into()));
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("risk aversion must be positive, got {}", alpha)));
    }
    // Constraint tolerances are relative to the size of the moves.
    let scale = match max_abs(increments) { m if m > 0.0 => m, _ => 1.0 };
    let drift = weighted_mean(q, increments, d);
    let drift_norm = max_abs(&drift);
    if drift_norm > 1e-9 * scale {
        return Err(Error::NonMartingaleKernel { node: 0, residual: drift_norm });
    }
    let (projector, rank) = row_space_projector(increments, d, RANK_TOL);
    let objective = |theta: &[f64]| -> f64 {
        let x: Vec<f64> = (0..k).map(|i| alpha * (cont[i] - dot(theta, &increments[i * d..(i + 1) * d]))).collect();
        log_sum_exp(q, &x)
    };
    if rank == 0 {
        return Ok(PrimalStep {
            value: objective(&vec![0.0; d]) / alpha,
            strategy: vec![0.0; d],
            iterations: 0,
            residual: 0.0,
        });
    }

    // Starting point: the best of zero, the warm start, the quadratic hedge
    // (exact on complete nodes) and, for strongly curved problems, the
    // minimax superhedging slope.
    let mut theta = vec![0.0; d];
    let mut best = objective(&theta);
    let quadratic = crate::bsde::gkw_step(q, increments, d, cont).psi;
    for cand in warm.into_iter().chain(core::iter::once(quadratic.as_slice())) {
        let f = objective(cand);
        if f < best {
            best = f;
            theta = cand.to_vec();
        }
    }
    let spread = cont.iter().fold(f64::NEG_INFINITY, |m, x| m.max(*x)) - cont.iter().fold(f64::INFINITY, |m, x| m.min(*x));
    if alpha * spread > 20.0 {
        if let Some((_, mm)) = lp::minimax_strategy(increments, d, cont) {
            let f = objective(&mm);
            if f < best {
                best = f;
                theta = mm;
            }
        }
    }
    let _ = best;

    let mut iterations = 0;
    let mut residual;
    loop {
        let x: Vec<f64> = (0..k).map(|i| alpha * (cont[i] - dot(&theta, &increments[i * d..(i + 1) * d]))).collect();
        let w = tilted_weights(q, &x);
        let m = weighted_mean(&w, increments, d);
        residual = max_abs(&m);
        if residual <= NEWTON_TOL * scale {
            let theta = mat_vec(&projector, d, &theta);
            let value = objective(&theta) / alpha;
            return Ok(PrimalStep {
                value,
                strategy: theta,
                iterations,
                residual,
            });
        }
        if iterations >= NEWTON_MAX_ITER {
            break;
        }
        iterations += 1;
        // Gradient −α m, Hessian α² Cov_w(ΔS): Newton step Cov⁺ m / α.
        let cov = weighted_second_moment(&w, increments, d, &m);
        let dir = damped_newton_direction(&cov, &projector, d, &m);
        let mut step: Vec<f64> = dir.iter().map(|s| s / alpha).collect();
        crate::measures::cap_exponent_change(&mut step, increments, d, alpha);
        let f0 = log_sum_exp(q, &x);
        let slope = -alpha * dot(&m, &step);
        // Near the optimum the predicted decrease drops below the rounding
        // of the objective; the full Newton step is then taken as is.
        let tiny = -slope <= 64.0 * f64::EPSILON * math::abs(f0).max(1.0);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            if tiny {
                theta.iter_mut().zip(&step).for_each(|(a, s)| *a += s);
                accepted = true;
                break;
            }
            let trial: Vec<f64> = theta.iter().zip(&step).map(|(a, s)| a + t * s).collect();
            let f1 = objective(&trial);
            if f1 <= f0 + 1e-4 * t * slope + 4.0 * f64::EPSILON * math::abs(f0) {
                theta = trial;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Err(Error::NewtonFailed {
        node: 0,
        iterations,
        residual,
    })
}

fn primal_sweep(tree: &EventTree, qe: &Measure, alpha: f64, values: &mut [f64], active: impl Fn(usize) -> bool) -> Result<(Strategy, Diagnostics)> {
    let d = tree.assets();
    let mut strategy = Strategy::zeros(tree);
    let mut diag = Diagnostics::default();
    for id in tree.backward() {
        if !active(id) {
            continue;
        }
        let q = qe.kernel(tree, id);
        let inc = tree.increments(id);
        let cont: Vec<f64> = tree.children(id).map(|c| values[c]).collect();
        let first = tree.children(id).start;
        let warm = if tree.is_terminal(first) { None } else { Some(strategy.get(first).to_vec()) };
        let step = match one_step_primal(&q, &inc, d, &cont, alpha, warm.as_deref()) {
            Ok(s) => s,
            Err(Error::NewtonFailed { .. }) if warm.is_some() => one_step_primal(&q, &inc, d, &cont, alpha, None).map_err(|e| e.at_node(id))?,
            Err(e) => return Err(e.at_node(id)),
        };
        values[id] = step.value;
        strategy.set(id, &step.strategy);
        diag.newton_iterations += step.iterations;
        diag.max_residual = diag.max_residual.max(step.residual);
    }
    Ok((strategy, diag))
}

/// Backward sweep of the primal Bellman step under `qe` from the claim.
pub fn indifference_surface(tree: &EventTree, claim: &Claim, alpha: f64, qe: &Measure) -> Result<ValuationResult> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("risk aversion must be positive, got {}", alpha)));
    }
    let mut values = vec![0.0; tree.len()];
    for (id, b) in tree.terminals().zip(claim.values()) {
        values[id] = *b;
    }
    let (strategy, diagnostics) = primal_sweep(tree, qe, alpha, &mut values, |_| true)?;
    Ok(ValuationResult {
        surface: ValuationSurface {
            values,
            alpha,
            route: Route::Primal,
        },
        strategy,
        diagnostics,
    })
}

/// Values up to a stopping rule for a payoff received at the rule's nodes.
/// Entries after the rule are `NaN`.
pub fn value_until(tree: &EventTree, rule: &StoppingRule, boundary: &[f64], alpha: f64, qe: &Measure) -> Result<Vec<f64>> {
    let mut values = vec![f64::NAN; tree.len()];
    for id in rule.nodes() {
        values[id] = boundary[id];
    }
    primal_sweep(tree, qe, alpha, &mut values, |id| rule.is_before(id))?;
    Ok(values)
}

/// Dual valuation and the two entropy legs it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct DualResult {
    pub surface: ValuationSurface,
    /// Leg with zero terminal cost (its measure is `Q^E`).
    pub zero_leg: EntropyResult,
    /// Leg with terminal cost `−αB` (its measure is `Q^{E,B}`).
    pub claim_leg: EntropyResult,
}

/// `C = Ṽ^0 − Ṽ^B` with both legs computed by entropic recursions under P.
pub fn dual_surface(tree: &EventTree, claim: &Claim, alpha: f64) -> Result<DualResult> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("risk aversion must be positive, got {}", alpha)));
    }
    let zero_leg = minimal_entropy_measure(tree, &vec![0.0; tree.terminal_count()])?;
    let cost: Vec<f64> = claim.values().iter().map(|b| -alpha * b).collect();
    let claim_leg = minimal_entropy_measure(tree, &cost)?;
    let values = zero_leg
        .value
        .iter()
        .zip(&claim_leg.value)
        .map(|(v0, vb)| (v0 - vb) / alpha)
        .collect();
    Ok(DualResult {
        surface: ValuationSurface {
            values,
            alpha,
            route: Route::Dual,
        },
        zero_leg,
        claim_leg,
    })
}

/// Ancestor of `id` at time `t` (`id` itself if `t` is its own time).
pub fn ancestor_at(tree: &EventTree, mut id: usize, t: usize) -> usize {
    while tree.node(id).time > t {
        id = tree.node(id).parent.unwrap_or(0);
    }
    id
}

/// Inputs of the static property suite.
#[derive(Debug, Clone)]
pub struct PropertyInputs<'a> {
    pub claim: &'a Claim,
    pub other: &'a Claim,
    pub alpha: f64,
    /// Larger risk aversion for the monotonicity check.
    pub alpha_prime: f64,
    /// Time at which the convex weight and the translation are measurable.
    pub mix_time: usize,
    /// Weight in [0, 1] per node of slice `mix_time`.
    pub mix: Vec<f64>,
    /// Translation per node of slice `mix_time`.
    pub shift: Vec<f64>,
    pub beta: f64,
    /// Scaling factors for the two volume inequalities: one in [0,1], one ≥ 1.
    pub gamma_low: f64,
    pub gamma_high: f64,
}

/// Static properties of `B ↦ C_t(B; α)`: bounds, monotonicity, measurable
/// convexity, translation invariance, volume scaling, monotonicity in α and
/// the two scaling inequalities.
pub fn property_checks(tree: &EventTree, qe: &Measure, input: &PropertyInputs<'_>, tol: &Tolerances) -> Result<Report> {
    let eq = tol.equality;
    let value = |b: &Claim, a: f64| -> Result<Vec<f64>> { Ok(indifference_surface(tree, b, a, qe)?.surface.values) };
    let alpha = input.alpha;
    let base = value(input.claim, alpha)?;
    let mut report = Report::default();
    let nodes = || 0..tree.len();
    let norm = input.claim.sup_norm();
    report.push(Check::inequality(
        "P0 bounds",
        nodes().map(|i| (i, norm - math::abs(base[i]))),
        eq,
    ));

    let upper = input.claim.zip_with(input.other, f64::max);
    let c_upper = value(&upper, alpha)?;
    report.push(Check::inequality("P1 monotone", nodes().map(|i| (i, c_upper[i] - base[i])), eq));

    let slice_start = tree.slice(input.mix_time).start;
    let terminal_start = tree.terminals().start;
    let weight_of = |terminal: usize| -> f64 { input.mix[ancestor_at(tree, terminal, input.mix_time) - slice_start] };
    let mixed = Claim::new(
        tree,
        tree.terminals()
            .map(|id| {
                let l = weight_of(id);
                l * input.claim.values()[id - terminal_start] + (1.0 - l) * input.other.values()[id - terminal_start]
            })
            .collect(),
    )?;
    let c_mixed = value(&mixed, alpha)?;
    let c_other = value(input.other, alpha)?;
    let later = || nodes().filter(|i| tree.node(*i).time >= input.mix_time);
    report.push(Check::inequality(
        "P2 convex",
        later().map(|i| {
            let l = input.mix[ancestor_at(tree, i, input.mix_time) - slice_start];
            (i, l * base[i] + (1.0 - l) * c_other[i] - c_mixed[i])
        }),
        eq,
    ));

    let shift_of = |id: usize| input.shift[ancestor_at(tree, id, input.mix_time) - slice_start];
    let shifted = Claim::new(
        tree,
        tree.terminals().map(|id| input.claim.values()[id - terminal_start] + shift_of(id)).collect(),
    )?;
    let c_shifted = value(&shifted, alpha)?;
    report.push(Check::equality(
        "P3 translation",
        later().map(|i| (i, c_shifted[i] - base[i] - shift_of(i))),
        eq,
    ));

    let c_beta = value(&input.claim.scaled(input.beta), alpha)?;
    let c_beta_alpha = value(input.claim, input.beta * alpha)?;
    report.push(Check::equality(
        "P5 volume scaling",
        nodes().map(|i| (i, c_beta[i] - input.beta * c_beta_alpha[i])),
        eq,
    ));

    let c_prime = value(input.claim, input.alpha_prime)?;
    report.push(Check::inequality("P6 risk aversion", nodes().map(|i| (i, c_prime[i] - base[i])), eq));

    let c_low = value(&input.claim.scaled(input.gamma_low), alpha)?;
    let c_high = value(&input.claim.scaled(input.gamma_high), alpha)?;
    report.push(Check::inequality(
        "P7 scaling inequalities",
        nodes().flat_map(|i| {
            [
                (i, input.gamma_low * base[i] - c_low[i]),
                (i, c_high[i] - input.gamma_high * base[i]),
            ]
        }),
        eq,
    ));
    Ok(report)
}

/// Arbitrage-free bounds and invariance under attainable claims.
pub fn arbitrage_bounds_check(tree: &EventTree, qe: &Measure, claim: &Claim, alpha: f64, test_strategies: &[Strategy], tol: &Tolerances) -> Result<Report> {
    let eq = tol.equality;
    let c = indifference_surface(tree, claim, alpha, qe)?.surface.values;
    let sup = superrep::superrep_surface(tree, claim)?.values;
    let inf = superrep::subreplication_surface(tree, claim)?;
    let mut report = Report::default();
    report.push(Check::inequality("lower arbitrage bound", (0..tree.len()).map(|i| (i, c[i] - inf[i])), eq));
    report.push(Check::inequality("upper arbitrage bound", (0..tree.len()).map(|i| (i, sup[i] - c[i])), eq));
    for (n, theta) in test_strategies.iter().enumerate() {
        let g = gains(tree, theta);
        let attainable = Claim::new(tree, g[tree.terminals()].to_vec())?;
        let c_att = indifference_surface(tree, &attainable, alpha, qe)?.surface.values;
        report.push(Check::equality(
            format!("attainable claim has zero value #{}", n),
            (0..tree.len()).map(|i| (i, c_att[i] - g[i])),
            eq,
        ));
        let plus = claim.zip_with(&attainable, |a, b| a + b);
        let c_plus = indifference_surface(tree, &plus, alpha, qe)?.surface.values;
        report.push(Check::equality(
            format!("attainable claim is annihilated #{}", n),
            (0..tree.len()).map(|i| (i, c_plus[i] - g[i] - c[i])),
            eq,
        ));
    }
    Ok(report)
}

/// `max |C_σ(C_τ(B)) − C_σ(B)|` over the nodes of σ.
pub fn time_consistency_check(tree: &EventTree, qe: &Measure, claim: &Claim, alpha: f64, sigma: &StoppingRule, tau: &StoppingRule) -> Result<f64> {
    if !sigma.precedes(tree, tau) {
        return Err(Error::InvalidStoppingRule("σ must not come after τ".into()));
    }
    let full = indifference_surface(tree, claim, alpha, qe)?.surface.values;
    let inner = value_until(tree, tau, &full, alpha, qe)?;
    Ok(sigma
        .nodes()
        .into_iter()
        .map(|id| math::abs(inner[id] - full[id]))
        .fold(0.0, f64::max))
}

/// Per-node slack of the submartingale inequality
/// `E_{Q^E}[J_{t+1} e^{−αϑ·ΔS} | node] ≥ J_t`, stated in value units:
/// `(1/α) log E[e^{α(C_{t+1} − ϑ·ΔS)}] − C_t`.
pub fn certificate_slacks(tree: &EventTree, qe: &Measure, values: &[f64], alpha: f64, theta: &Strategy) -> Vec<(usize, f64)> {
    let d = tree.assets();
    tree.backward()
        .map(|id| {
            let q = qe.kernel(tree, id);
            let inc = tree.increments(id);
            let th = theta.get(id);
            let x: Vec<f64> = tree
                .children(id)
                .enumerate()
                .map(|(i, c)| alpha * (values[c] - dot(th, &inc[i * d..(i + 1) * d])))
                .collect();
            (id, log_sum_exp(&q, &x) / alpha - values[id])
        })
        .collect()
}

/// Martingale optimality principle: submartingale for the test strategy,
/// martingale for the optimizer.
pub fn optimality_certificate(tree: &EventTree, qe: &Measure, result: &ValuationResult, theta_test: &Strategy, tol: &Tolerances) -> Report {
    let alpha = result.surface.alpha;
    let values = &result.surface.values;
    let mut report = Report::default();
    report.push(Check::inequality(
        "submartingale for test strategy",
        certificate_slacks(tree, qe, values, alpha, theta_test),
        tol.equality,
    ));
    report.push(Check::equality(
        "martingale for optimal strategy",
        certificate_slacks(tree, qe, values, alpha, &result.strategy),
        tol.equality,
    ));
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{random_tree, RandomTreeSpec};
    use crate::tree::NodeSpec;
    use approx::assert_relative_eq;

    fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
        let r = (5f64.sqrt() - 1.0) / 2.0;
        let mut a = hi - r * (hi - lo);
        let mut b = lo + r * (hi - lo);
        let (mut fa, mut fb) = (f(a), f(b));
        while hi - lo > 1e-11 {
            if fa < fb {
                hi = b;
                b = a;
                fb = fa;
                a = hi - r * (hi - lo);
                fa = f(a);
            } else {
                lo = a;
                a = b;
                fa = fb;
                b = lo + r * (hi - lo);
                fb = f(b);
            }
        }
        let x = 0.5 * (lo + hi);
        (x, f(x))
    }

    #[test]
    fn constant_continuation_needs_no_trading() {
        let s = one_step_primal(&[0.5, 0.25, 0.25], &[0.0, -1.0, 1.0], 1, &[0.7, 0.7, 0.7], 2.0, None).unwrap();
        assert_relative_eq!(s.value, 0.7, epsilon = 1e-13);
        assert_relative_eq!(s.strategy[0], 0.0, epsilon = 1e-13);
    }

    #[test]
    fn attainable_continuation_is_replicated() {
        let inc = [0.0, -1.0, 1.0];
        let cont: Vec<f64> = inc.iter().map(|x| 0.3 * x).collect();
        let s = one_step_primal(&[0.5, 0.25, 0.25], &inc, 1, &cont, 1.0, None).unwrap();
        assert_relative_eq!(s.value, 0.0, epsilon = 1e-12);
        assert_relative_eq!(s.strategy[0], 0.3, epsilon = 1e-10);
    }

    #[test]
    fn one_step_matches_golden_section_oracle() {
        let q = [0.5, 0.25, 0.25];
        let inc = [0.0, -1.0, 1.0];
        let cont = [0.0, 0.0, 1.0];
        let obj = |th: f64| -> f64 { (0..3).map(|i| q[i] * (cont[i] - th * inc[i]).exp()).sum::<f64>().ln() };
        let (th, v) = golden_min(obj, -10.0, 10.0);
        let s = one_step_primal(&q, &inc, 1, &cont, 1.0, None).unwrap();
        assert_relative_eq!(s.value, v, epsilon = 1e-10);
        assert_relative_eq!(s.strategy[0], th, epsilon = 1e-5);
        // Frozen from the golden-section oracle: θ* = 1/2, value = log(1/2 + e^{1/2}/2).
        assert_relative_eq!(s.strategy[0], 0.5, epsilon = 1e-10);
        assert_relative_eq!(s.value, (0.5 + 0.5 * 0.5f64.exp()).ln(), epsilon = 1e-12);
    }

    #[test]
    fn value_sits_between_minimum_and_certainty_equivalent() {
        let q = [0.3, 0.3, 0.4];
        let inc = [-1.0, 0.2, 0.6];
        let cont = [0.5, -0.3, 1.2];
        for alpha in [0.1, 1.0, 10.0, 1000.0] {
            let s = one_step_primal(&q, &inc, 1, &cont, alpha, None).unwrap();
            let ce = log_sum_exp(&q, &cont.iter().map(|c| alpha * c).collect::<Vec<_>>()) / alpha;
            assert!(s.value <= ce + 1e-12);
            let min_cont = cont.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(s.value >= min_cont - 1e-12);
        }
    }

    #[test]
    fn non_martingale_kernel_is_rejected() {
        let err = one_step_primal(&[0.5, 0.5], &[1.0, -0.5], 1, &[0.0, 1.0], 1.0, None).unwrap_err();
        assert!(matches!(err, Error::NonMartingaleKernel { .. }));
    }

    #[test]
    fn degenerate_node_uses_certainty_equivalent() {
        let s = one_step_primal(&[0.5, 0.5], &[0.0, 0.0], 1, &[0.0, 1.0], 1.0, None).unwrap();
        assert_relative_eq!(s.value, (0.5 + 0.5 * 1f64.exp()).ln(), epsilon = 1e-14);
        assert_eq!(s.strategy[0], 0.0);
    }

    #[test]
    fn complete_tree_value_is_independent_of_alpha() {
        let spec = NodeSpec::with_children(
            1.0,
            vec![1.0],
            vec![
                NodeSpec::with_children(0.6, vec![1.2], vec![NodeSpec::leaf(0.5, vec![1.5]), NodeSpec::leaf(0.5, vec![1.0])]),
                NodeSpec::with_children(0.4, vec![0.9], vec![NodeSpec::leaf(0.3, vec![1.1]), NodeSpec::leaf(0.7, vec![0.7])]),
            ],
        );
        let tree = EventTree::from_spec(2, 1, &spec).unwrap();
        let qe = minimal_entropy_measure(&tree, &[0.0; 4]).unwrap().measure;
        let claim = Claim::from_fn(&tree, |s, _| (s[0] - 1.0).max(0.0)).unwrap();
        let expect = qe.conditional_expectation(&tree, claim.values())[0];
        for alpha in [0.1, 1.0, 10.0] {
            let c = indifference_surface(&tree, &claim, alpha, &qe).unwrap();
            assert_relative_eq!(c.surface.root(), expect, epsilon = 1e-10);
        }
    }

    #[test]
    fn primal_and_dual_routes_agree() {
        let tree = random_tree(&RandomTreeSpec::new(3, 3, 1, 11)).unwrap();
        let claim = Claim::from_fn(&tree, |s, _| (s[0] - 1.0).max(0.0)).unwrap();
        let qe = minimal_entropy_measure(&tree, &vec![0.0; tree.terminal_count()]).unwrap().measure;
        for alpha in [0.25, 1.0, 4.0] {
            let primal = indifference_surface(&tree, &claim, alpha, &qe).unwrap();
            let dual = dual_surface(&tree, &claim, alpha).unwrap();
            assert!(primal.surface.max_abs_diff(&dual.surface) <= 1e-9);
        }
    }

    #[test]
    fn dual_route_translates_constants() {
        let tree = random_tree(&RandomTreeSpec::new(2, 3, 1, 4)).unwrap();
        let dual = dual_surface(&tree, &Claim::constant(&tree, 0.75), 2.0).unwrap();
        for v in &dual.surface.values {
            assert_relative_eq!(*v, 0.75, epsilon = 1e-12);
        }
        let zero = dual_surface(&tree, &Claim::constant(&tree, 0.0), 2.0).unwrap();
        assert!(zero.surface.values.iter().all(|v| v.abs() < 1e-14));
        assert_eq!(zero.zero_leg.measure, zero.claim_leg.measure);
    }

    #[test]
    fn certificate_is_tight_for_optimizer_and_second_order_nearby() {
        let tree = random_tree(&RandomTreeSpec::new(3, 3, 1, 11)).unwrap();
        let claim = Claim::from_fn(&tree, |s, _| (s[0] - 1.0).max(0.0)).unwrap();
        let qe = minimal_entropy_measure(&tree, &vec![0.0; tree.terminal_count()]).unwrap().measure;
        let res = indifference_surface(&tree, &claim, 1.0, &qe).unwrap();
        let tol = Tolerances::default();
        let rep = optimality_certificate(&tree, &qe, &res, &Strategy::zeros(&tree), &tol);
        assert!(rep.all_passed(), "{:?}", rep);
        let zero_slack = certificate_slacks(&tree, &qe, &res.surface.values, 1.0, &Strategy::zeros(&tree));
        assert!(zero_slack.iter().any(|(_, s)| *s > 1e-6), "zero strategy should be strictly suboptimal somewhere");
        let bump = |eps: f64| res.strategy.add(&Strategy::constant(&tree, &[eps]));
        let s1 = certificate_slacks(&tree, &qe, &res.surface.values, 1.0, &bump(0.01));
        let s2 = certificate_slacks(&tree, &qe, &res.surface.values, 1.0, &bump(0.02));
        for ((_, a), (_, b)) in s1.iter().zip(&s2) {
            assert!(*a >= 0.0 && *b >= 0.0);
            // Quadratic growth: doubling ε multiplies the slack by ≈ 4.
            if *a > 1e-9 {
                assert!((b / a - 4.0).abs() < 0.3, "ratio {}", b / a);
            }
        }
    }
}

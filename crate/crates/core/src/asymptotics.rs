//! Risk-aversion sweeps: convergence to the `Q^E` price as α → 0, to the
//! superreplication price as α → ∞, and Lipschitz/continuity estimates.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bsde::{bmo_norms, exact_decomposition, gkw_step, remaining_sum, BsdeSolution};
use crate::error::{Error, Result};
use crate::math::{self, linear_fit};
use crate::measures::Measure;
use crate::superrep::{compensator_under, superreplication, SuperrepSurface};
use crate::tree::{gains, Claim, EventTree, StoppingRule, Strategy};
use crate::valuation::indifference_surface;

/// GKW decomposition of a claim under `Q^E`: `B = V^E_0 + Σ ψ^E·ΔS + L^E_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct GkwOfClaim {
    pub ve: Vec<f64>,
    pub psi_e: Strategy,
    /// Orthogonal increments per edge (indexed by child).
    pub dl_e: Vec<f64>,
}

pub fn gkw_of_claim(tree: &EventTree, claim: &Claim, qe: &Measure) -> GkwOfClaim {
    let d = tree.assets();
    let ve = qe.conditional_expectation(tree, claim.values());
    let mut psi_e = Strategy::zeros(tree);
    let mut dl_e = vec![0.0; tree.len()];
    for id in tree.backward() {
        let v: Vec<f64> = tree.children(id).map(|c| ve[c]).collect();
        let step = gkw_step(&qe.kernel(tree, id), &tree.increments(id), d, &v);
        psi_e.set(id, &step.psi);
        for (c, l) in tree.children(id).zip(step.dl) {
            dl_e[c] = l;
        }
    }
    GkwOfClaim { ve, psi_e, dl_e }
}

/// Per-node conditional second moments `w = E_{Q^E}[ΔS ΔSᵀ | node]` and
/// node masses `Q^E(node)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedNormContext {
    pub assets: usize,
    /// Row-major `d × d` block per node (zero at terminal nodes).
    pub weights: Vec<f64>,
    pub mass: Vec<f64>,
    pub total_mass: f64,
}

impl WeightedNormContext {
    pub fn new(tree: &EventTree, qe: &Measure) -> Self {
        let d = tree.assets();
        let mut weights = vec![0.0; tree.len() * d * d];
        let marg = qe.marginals(tree);
        let mut mass = vec![0.0; tree.len()];
        for id in 0..tree.len() {
            if tree.is_terminal(id) {
                continue;
            }
            let w = math::weighted_second_moment(&qe.kernel(tree, id), &tree.increments(id), d, &vec![0.0; d]);
            weights[id * d * d..(id + 1) * d * d].copy_from_slice(&w);
            mass[id] = marg[id];
        }
        let total_mass = mass.iter().sum();
        Self {
            assets: d,
            weights,
            mass,
            total_mass,
        }
    }

    fn quad(&self, id: usize, x: &[f64]) -> f64 {
        let d = self.assets;
        let w = &self.weights[id * d * d..(id + 1) * d * d];
        (0..d).map(|i| (0..d).map(|j| x[i] * w[i * d + j] * x[j]).sum::<f64>()).sum()
    }

    /// `Σ_nodes Q^E(node) ϑᵀ w ϑ`, equal to `E_{Q^E}[G_T(ϑ)²]`.
    pub fn squared_norm(&self, theta: &Strategy) -> f64 {
        (0..self.mass.len()).map(|id| self.mass[id] * self.quad(id, theta.get(id))).sum()
    }

    /// `Σ_nodes Q^E(node) ((a − b)ᵀ w (a − b))^{1/2}`.
    pub fn l1_distance(&self, a: &Strategy, b: &Strategy) -> f64 {
        let diff = a.difference(b);
        (0..self.mass.len())
            .filter(|id| self.mass[*id] > 0.0)
            .map(|id| self.mass[id] * math::sqrt(self.quad(id, diff.get(id)).max(0.0)))
            .sum()
    }
}

/// Least-squares line through `(log x, log y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
}

/// Log-log fit; `None` if fewer than two points are strictly positive.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Option<Fit> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && y.is_finite())
        .map(|(x, y)| (math::ln(*x), math::ln(*y)))
        .unzip();
    if lx.len() < 2 || lx.len() < xs.len() {
        return None;
    }
    let (slope, intercept, stderr) = linear_fit(&lx, &ly);
    Some(Fit { slope, intercept, stderr })
}

/// Geometric grid `2^lo, …, 2^hi`.
pub fn power_grid(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|k| libm::pow(2.0, k as f64)).collect()
}

/// One α of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SweepRow {
    pub alpha: f64,
    /// Sup-node distance to the target (`E_{Q^E}[B|·]` or `C*`).
    pub dist_sup: f64,
    /// Squared BMO distance of the integrals (small α) to `ψ^E`.
    pub dist_psi_sq: f64,
    /// Squared BMO distance of the orthogonal parts (small α) to `L^E`.
    pub dist_l_sq: f64,
    pub bmo_psi: f64,
    pub bmo_l: f64,
    /// Large α: `E_{Q^E}|A_T − K_T|` between the value compensator and the
    /// `Q^E`-compensator of `C*`.
    pub comp_dist: f64,
    /// Large α: the same at the worst of the supplied stopping rules.
    pub comp_dist_stopped: f64,
    pub root_value: f64,
    /// `C*_0 − C_0` (large α) or `C_0 − E_{Q^E}[B]` (small α).
    pub gap: f64,
    /// Large α: weighted-L¹ distance of ϑ*(α) to ψ*.
    pub strat_dist: f64,
    /// Large α: worst `|E_{Q^E}[η G_T(ϑ*(α) − ψ*)]|` over the test variables.
    pub weak_dist: f64,
    /// Small α: node-wise residual of the exact small-α identity.
    pub identity_residual: f64,
    /// Smallest slack of `E_{Q^E}[B|·] ≤ C ≤ C*`.
    pub sandwich_margin: f64,
    pub bmo_l_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Small,
    Large,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub kind: SweepKind,
    pub rows: Vec<SweepRow>,
    /// Small α: slope of `dist_sup` vs α.
    pub sup_fit: Option<Fit>,
    /// Small α: slope of `dist_psi_sq + dist_l_sq` vs α.
    pub strategy_fit: Option<Fit>,
    /// Slope of `bmo_l` vs α.
    pub bmo_l_fit: Option<Fit>,
    /// Large α: superreplication price.
    pub cstar_root: f64,
}

impl SweepReport {
    pub fn alphas(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.alpha).collect()
    }

    pub fn column(&self, f: impl Fn(&SweepRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }

    /// Number of consecutive pairs where the column increases by more than `tol`.
    pub fn increases(&self, f: impl Fn(&SweepRow) -> f64, tol: f64) -> usize {
        let c = self.column(f);
        c.windows(2).filter(|w| w[1] > w[0] + tol).count()
    }

    /// Number of consecutive pairs where the column decreases by more than `tol`.
    pub fn decreases(&self, f: impl Fn(&SweepRow) -> f64, tol: f64) -> usize {
        let c = self.column(f);
        c.windows(2).filter(|w| w[1] < w[0] - tol).count()
    }
}

fn check_grid(grid: &[f64], lo: f64, hi: f64) -> Result<()> {
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("α grid must be strictly increasing with at least two points".into()));
    }
    if grid[0] <= lo || grid[grid.len() - 1] > hi {
        return Err(Error::InvalidArgument(alloc::format!("α grid must lie in ({}, {}]", lo, hi)));
    }
    Ok(())
}

fn bracket_increments(tree: &EventTree, cumulative: &[f64]) -> Vec<f64> {
    (0..tree.len())
        .map(|c| match tree.node(c).parent {
            Some(p) => cumulative[c] - cumulative[p],
            None => 0.0,
        })
        .collect()
}

fn sup_of(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(*x))
}

/// Exact decomposition plus the optimal strategy at one α.
fn solve(tree: &EventTree, claim: &Claim, alpha: f64, qe: &Measure) -> Result<(BsdeSolution, Strategy)> {
    let res = indifference_surface(tree, claim, alpha, qe)?;
    Ok((exact_decomposition(tree, &res.surface, qe)?, res.strategy))
}

/// Convergence to the `Q^E` price and to the GKW decomposition as α → 0.
pub fn small_alpha_sweep(tree: &EventTree, claim: &Claim, grid: &[f64], qe: &Measure) -> Result<SweepReport> {
    check_grid(grid, 0.0, 1.0)?;
    let gkw = gkw_of_claim(tree, claim, qe);
    let cstar = superreplication(tree, claim)?.values;
    let mut rows = Vec::with_capacity(grid.len());
    for &alpha in grid {
        let (sol, _) = solve(tree, claim, alpha, qe)?;
        let c = &sol.values;
        let remaining = remaining_sum(tree, qe, &bracket_increments(tree, &sol.qv_l));
        let identity_residual = (0..tree.len())
            .map(|i| math::abs(c[i] - gkw.ve[i] - 0.5 * alpha * remaining[i]))
            .fold(0.0, f64::max);
        let dpsi = sol.psi.difference(&gkw.psi_e);
        let psi_sq: Vec<f64> = (0..tree.len())
            .map(|ch| match tree.node(ch).parent {
                Some(p) => {
                    let s = tree.price(p);
                    let x: f64 = dpsi.get(p).iter().zip(tree.price(ch).iter().zip(s)).map(|(x, (a, b))| x * (a - b)).sum();
                    x * x
                }
                None => 0.0,
            })
            .collect();
        let l_sq: Vec<f64> = sol.dl.iter().zip(&gkw.dl_e).map(|(a, b)| (a - b) * (a - b)).collect();
        let bmo = bmo_norms(tree, &sol, qe);
        rows.push(SweepRow {
            alpha,
            dist_sup: (0..tree.len()).map(|i| math::abs(c[i] - gkw.ve[i])).fold(0.0, f64::max),
            dist_psi_sq: sup_of(&remaining_sum(tree, qe, &psi_sq)),
            dist_l_sq: sup_of(&remaining_sum(tree, qe, &l_sq)),
            bmo_psi: bmo.bmo_psi,
            bmo_l: bmo.bmo_l,
            bmo_l_residual: bmo.bmo_l_residual,
            root_value: c[0],
            gap: c[0] - gkw.ve[0],
            identity_residual,
            sandwich_margin: (0..tree.len())
                .map(|i| (c[i] - gkw.ve[i]).min(cstar[i] - c[i]))
                .fold(f64::INFINITY, f64::min),
            ..SweepRow::default()
        });
    }
    let alphas: Vec<f64> = rows.iter().map(|r| r.alpha).collect();
    let sup: Vec<f64> = rows.iter().map(|r| r.dist_sup).collect();
    let strat: Vec<f64> = rows.iter().map(|r| r.dist_psi_sq + r.dist_l_sq).collect();
    let bmo_l: Vec<f64> = rows.iter().map(|r| r.bmo_l).collect();
    Ok(SweepReport {
        kind: SweepKind::Small,
        sup_fit: fit_loglog(&alphas, &sup),
        strategy_fit: fit_loglog(&alphas, &strat),
        bmo_l_fit: fit_loglog(&alphas, &bmo_l),
        rows,
        cstar_root: cstar[0],
    })
}

/// Small-α strategy convergence; the same sweep, read through its strategy
/// columns and `strategy_fit`.
pub fn strategy_convergence_small_alpha(tree: &EventTree, claim: &Claim, grid: &[f64], qe: &Measure) -> Result<SweepReport> {
    small_alpha_sweep(tree, claim, grid, qe)
}

/// Bounded terminal test variables with entries in [−1, 1], fixed by `seed`.
pub fn test_variables(tree: &EventTree, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..tree.terminal_count()).map(|_| rng.gen_range(-1.0..=1.0)).collect())
        .collect()
}

/// Convergence to the superreplication price, its compensator and its
/// strategy as α → ∞. `rules` are extra stopping rules at which the
/// compensators are compared; `tests` are terminal test variables for the
/// weak strategy distance.
pub fn large_alpha_sweep(tree: &EventTree, claim: &Claim, grid: &[f64], qe: &Measure, rules: &[StoppingRule], tests: &[Vec<f64>]) -> Result<SweepReport> {
    check_grid(grid, 0.0, f64::INFINITY)?;
    let sup: SuperrepSurface = superreplication(tree, claim)?;
    let k_star = compensator_under(tree, &sup.values, qe);
    let weights = WeightedNormContext::new(tree, qe);
    let marg = qe.marginals(tree);
    let ve = qe.conditional_expectation(tree, claim.values());
    let terminal = StoppingRule::at_time(tree, tree.horizon());
    let comp_at = |a: &[f64], rule: &StoppingRule| -> f64 { rule.nodes().into_iter().map(|id| marg[id] * math::abs(a[id] - k_star[id])).sum() };
    let mut rows = Vec::with_capacity(grid.len());
    for &alpha in grid {
        let (sol, theta) = solve(tree, claim, alpha, qe)?;
        let c = &sol.values;
        let bmo = bmo_norms(tree, &sol, qe);
        let g = gains(tree, &theta.difference(&sup.psi_star));
        let weak_dist = tests
            .iter()
            .map(|eta| math::abs(tree.terminals().zip(eta).map(|(id, e)| marg[id] * e * g[id]).sum::<f64>()))
            .fold(0.0, f64::max);
        rows.push(SweepRow {
            alpha,
            dist_sup: (0..tree.len()).map(|i| math::abs(sup.values[i] - c[i])).fold(0.0, f64::max),
            bmo_psi: bmo.bmo_psi,
            bmo_l: bmo.bmo_l,
            bmo_l_residual: bmo.bmo_l_residual,
            comp_dist: comp_at(&sol.compensator, &terminal),
            comp_dist_stopped: rules.iter().map(|r| comp_at(&sol.compensator, r)).fold(0.0, f64::max),
            root_value: c[0],
            gap: sup.values[0] - c[0],
            strat_dist: weights.l1_distance(&theta, &sup.psi_star),
            weak_dist,
            sandwich_margin: (0..tree.len())
                .map(|i| (c[i] - ve[i]).min(sup.values[i] - c[i]))
                .fold(f64::INFINITY, f64::min),
            ..SweepRow::default()
        });
    }
    let alphas: Vec<f64> = rows.iter().map(|r| r.alpha).collect();
    let bmo_l: Vec<f64> = rows.iter().map(|r| r.bmo_l).collect();
    Ok(SweepReport {
        kind: SweepKind::Large,
        sup_fit: None,
        strategy_fit: None,
        bmo_l_fit: fit_loglog(&alphas, &bmo_l),
        rows,
        cstar_root: sup.values[0],
    })
}

/// Empirical Lipschitz constant of α ↦ C(α) in the sup norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzReport {
    pub gamma: f64,
    /// Largest ratio over the coarse pair set.
    pub k_coarse: f64,
    /// Largest ratio over the refined pair set (a superset of the coarse one).
    pub k_fine: f64,
}

impl LipschitzReport {
    pub fn refinement_ratio(&self) -> f64 {
        if self.k_coarse > 0.0 {
            self.k_fine / self.k_coarse
        } else if self.k_fine > 0.0 {
            f64::INFINITY
        } else {
            1.0
        }
    }
}

/// Draws `pairs` random pairs in (0, γ]² and then as many again; reports the
/// largest `sup_t |C_t(α) − C_t(α')| / |α − α'|` over the first batch and
/// over both.
pub fn lipschitz_in_alpha(tree: &EventTree, claim: &Claim, qe: &Measure, gamma: f64, pairs: usize, seed: u64) -> Result<LipschitzReport> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument("γ must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ratio = |rng: &mut ChaCha8Rng| -> Result<f64> {
        let a = gamma * (1.0 - rng.gen::<f64>());
        let b = gamma * (1.0 - rng.gen::<f64>());
        if a == b {
            return Ok(0.0);
        }
        let ca = indifference_surface(tree, claim, a, qe)?.surface;
        let cb = indifference_surface(tree, claim, b, qe)?.surface;
        Ok(ca.max_abs_diff(&cb) / math::abs(a - b))
    };
    let mut k_coarse: f64 = 0.0;
    for _ in 0..pairs {
        k_coarse = k_coarse.max(ratio(&mut rng)?);
    }
    let mut k_fine = k_coarse;
    for _ in 0..pairs {
        k_fine = k_fine.max(ratio(&mut rng)?);
    }
    Ok(LipschitzReport { gamma, k_coarse, k_fine })
}

/// For each perturbed claim: `(‖Bⁿ − B‖_∞, sup_{α ∈ alphas} sup_t |C_t(Bⁿ;α) − C_t(B;α)|)`.
pub fn continuity_in_b(tree: &EventTree, claim: &Claim, sequence: &[Claim], alphas: &[f64], qe: &Measure) -> Result<Vec<(f64, f64)>> {
    let base: Vec<_> = alphas
        .iter()
        .map(|a| indifference_surface(tree, claim, *a, qe).map(|r| r.surface))
        .collect::<Result<_>>()?;
    sequence
        .iter()
        .map(|bn| {
            let bound = math::max_abs(&bn.zip_with(claim, |a, b| a - b).values().to_vec());
            let mut dist: f64 = 0.0;
            for (a, c) in alphas.iter().zip(&base) {
                dist = dist.max(indifference_surface(tree, bn, *a, qe)?.surface.max_abs_diff(c));
            }
            Ok((bound, dist))
        })
        .collect()
}

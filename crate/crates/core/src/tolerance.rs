/// Numerical tolerances shared by every check. Defaults are the acceptance
/// values; the CLI may override them from its config file.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct Tolerances {
    /// Martingale and other linear constraints.
    pub constraint: f64,
    /// Node-wise equalities between independently computed surfaces.
    pub equality: f64,
    /// Half-width of the accepted band around a fitted convergence rate.
    pub rate: f64,
    /// Relative slack on the uniform BMO bounds.
    pub bmo_margin: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            constraint: 1e-10,
            equality: 1e-9,
            rate: 0.1,
            bmo_margin: 0.1,
        }
    }
}

/// Newton stopping tolerance on the tilted mean of the increments.
pub(crate) const NEWTON_TOL: f64 = 1e-12;
/// Iteration cap for the damped Newton solvers.
pub(crate) const NEWTON_MAX_ITER: usize = 100;
/// Relative eigenvalue cutoff for rank decisions.
pub(crate) const RANK_TOL: f64 = 1e-12;
/// Smallest reference probability accepted in a tree spec.
pub const PROBABILITY_FLOOR: f64 = 1e-10;
/// Tolerance on Σp = 1 in tree specs.
pub const PROBABILITY_SUM_TOL: f64 = 1e-12;

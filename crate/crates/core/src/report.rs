use alloc::string::String;
use alloc::vec::Vec;

use crate::math::abs;

/// Outcome of one named check. `margin ≥ −tolerance` passes; for equality
/// checks the margin is minus the worst absolute deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub margin: f64,
    pub worst_node: Option<usize>,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.margin >= -self.tolerance
    }

    /// Inequality `lhs ≥ rhs` node-wise, given the per-node slacks `lhs − rhs`.
    pub fn inequality(name: impl Into<String>, slacks: impl IntoIterator<Item = (usize, f64)>, tolerance: f64) -> Self {
        let (node, margin) = slacks
            .into_iter()
            .fold((None, f64::INFINITY), |(bn, bm), (id, s)| if s < bm { (Some(id), s) } else { (bn, bm) });
        Self {
            name: name.into(),
            margin,
            worst_node: node,
            tolerance,
        }
    }

    /// Equality node-wise, given the per-node differences.
    pub fn equality(name: impl Into<String>, diffs: impl IntoIterator<Item = (usize, f64)>, tolerance: f64) -> Self {
        Self::inequality(name, diffs.into_iter().map(|(id, d)| (id, -abs(d))), tolerance)
    }

    /// Scalar pass/fail with an explicit margin.
    pub fn scalar(name: impl Into<String>, margin: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            margin,
            worst_node: None,
            tolerance,
        }
    }
}

/// Collection of checks.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn extend(&mut self, other: Report) {
        self.checks.extend(other.checks);
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    /// The failing check with the most negative margin (relative to its
    /// tolerance), if any.
    pub fn worst_failure(&self) -> Option<&Check> {
        self.checks
            .iter()
            .filter(|c| !c.passed())
            .min_by(|a, b| (a.margin + a.tolerance).total_cmp(&(b.margin + b.tolerance)))
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

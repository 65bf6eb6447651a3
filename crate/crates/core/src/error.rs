use alloc::string::String;

use thiserror::Error;

/// Errors raised by tree construction and the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("node {node}: {reason}")]
    InvalidTree { node: usize, reason: String },

    #[error("node {node}: probabilities sum to {sum}")]
    ProbabilitySum { node: usize, sum: f64 },

    #[error("node {node}: no strictly positive martingale kernel exists")]
    NoArbitrageViolated { node: usize },

    #[error("node {node}: kernel is not a martingale kernel (|E[dS]| = {residual:e})")]
    NonMartingaleKernel { node: usize, residual: f64 },

    #[error("node {node}: Newton iteration did not converge after {iterations} steps (residual {residual:e})")]
    NewtonFailed {
        node: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid stopping rule: {0}")]
    InvalidStoppingRule(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Attach a node id to errors raised by node-agnostic one-step solvers.
    pub(crate) fn at_node(self, id: usize) -> Self {
        match self {
            Error::NoArbitrageViolated { .. } => Error::NoArbitrageViolated { node: id },
            Error::NonMartingaleKernel { residual, .. } => Error::NonMartingaleKernel { node: id, residual },
            Error::NewtonFailed {
                iterations, residual, ..
            } => Error::NewtonFailed {
                node: id,
                iterations,
                residual,
            },
            other => other,
        }
    }

    /// True for failures of the numerical solvers (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NewtonFailed { .. })
    }
}

pub type Result<T> = core::result::Result<T, Error>;

//! Exponential utility indifference valuation on finite event trees.
//!
//! The crate computes, for a claim `B` and risk aversion `α`, the dynamic
//! indifference value `C_t(B; α)` by a primal dynamic program under the
//! minimal entropy martingale measure and, independently, by the entropic
//! dual. It also provides the orthogonal (GKW) decomposition of the value
//! process, an explicit scheme for the associated quadratic BSDE,
//! superreplication prices with their optional decomposition, and sweeps
//! over `α` toward both limits.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod asymptotics;
pub mod bsde;
pub mod context;
pub mod corpus;
pub mod error;
pub mod generator;
pub mod lattice;
pub mod lp;
pub mod math;
pub mod measures;
pub mod report;
pub mod superrep;
pub mod tolerance;
pub mod tree;
pub mod valuation;

pub use context::MarketContext;
pub use error::{Error, Result};
pub use measures::{minimal_entropy_measure, EntropyResult, Measure};
pub use report::{Check, Report};
pub use tolerance::Tolerances;
pub use tree::{Claim, EventTree, NodeSpec, StoppingRule, Strategy};
pub use valuation::{dual_surface, indifference_surface, Route, ValuationResult, ValuationSurface};

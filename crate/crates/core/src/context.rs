//! A tree bundled with its minimal entropy measure.

use alloc::vec;

use crate::error::Result;
use crate::measures::{minimal_entropy_measure, EntropyResult, Measure};
use crate::tree::EventTree;

/// An arbitrage-free market with `Q^E` computed once.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketContext {
    pub tree: EventTree,
    pub entropy: EntropyResult,
}

impl MarketContext {
    pub fn new(tree: EventTree) -> Result<Self> {
        let entropy = minimal_entropy_measure(&tree, &vec![0.0; tree.terminal_count()])?;
        Ok(Self { tree, entropy })
    }

    pub fn qe(&self) -> &Measure {
        &self.entropy.measure
    }
}

//! The seeded random instance corpus used by the property suites.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::context::MarketContext;
use crate::error::Result;
use crate::generator::{random_tree, RandomTreeSpec};
use crate::tree::Claim;

/// Risk aversions cycled through the corpus.
pub const CORPUS_ALPHAS: [f64; 3] = [0.25, 1.0, 4.0];

/// Largest payoff magnitude of corpus claims.
pub const CORPUS_CLAIM_BOUND: f64 = 2.0;

/// One random market with a claim and a risk aversion.
#[derive(Debug, Clone)]
pub struct Instance {
    pub index: usize,
    pub spec: RandomTreeSpec,
    pub market: MarketContext,
    pub claim: Claim,
    pub label: String,
    pub alpha: f64,
}

/// Instance `index` of the corpus rooted at `seed`. Shapes cycle through
/// one asset with three or four branches and two assets with four branches,
/// so every node leaves unhedgeable risk.
pub fn instance(seed: u64, index: usize) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(index as u64));
    let (assets, branching) = [(1, 3), (1, 4), (2, 4)][index % 3];
    let depth = rng.gen_range(2..=5);
    let spec = RandomTreeSpec::new(depth, branching, assets, rng.gen());
    let market = MarketContext::new(random_tree(&spec)?)?;
    let tree = &market.tree;

    // Strike between the 30% and 70% quantiles of the terminal basket price
    // so the payoff is neither identically zero nor linear.
    let basket: Vec<f64> = tree
        .terminals()
        .map(|id| tree.price(id).iter().sum::<f64>() / assets as f64)
        .collect();
    let mut sorted = basket.clone();
    sorted.sort_by(f64::total_cmp);
    let quantile = |u: f64| sorted[((sorted.len() - 1) as f64 * u) as usize];
    let strike = quantile(rng.gen_range(0.3..0.7));
    let notional = rng.gen_range(0.5..2.0);
    let kind = rng.gen_range(0..3);
    let width = rng.gen_range(0.05..0.3);
    let payoff: Vec<f64> = basket
        .iter()
        .map(|s| {
            let raw = match kind {
                0 => (s - strike).max(0.0),
                1 => (strike - s).max(0.0),
                _ => (s - strike).max(0.0) - (s - strike - width).max(0.0),
            };
            (notional * raw).min(CORPUS_CLAIM_BOUND)
        })
        .collect();
    let label = format!(
        "{} notional {:.3} strike {:.4}{}",
        ["call", "put", "call spread"][kind],
        notional,
        strike,
        if kind == 2 { format!(" width {:.3}", width) } else { String::new() }
    );
    let claim = Claim::new(tree, payoff)?;
    Ok(Instance {
        index,
        spec,
        market,
        claim,
        label,
        alpha: CORPUS_ALPHAS[(index / 3) % CORPUS_ALPHAS.len()],
    })
}

/// The first `count` instances rooted at `seed`.
pub fn corpus(seed: u64, count: usize) -> Result<Vec<Instance>> {
    (0..count).map(|i| instance(seed, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_instances_are_bounded_and_nontrivial() {
        for inst in corpus(1, 12).unwrap() {
            let norm = inst.claim.sup_norm();
            assert!(norm <= CORPUS_CLAIM_BOUND && norm > 0.0, "{}", inst.label);
            assert!(inst.market.tree.horizon() <= 5);
            assert!(inst.market.tree.validate_no_arbitrage().arbitrage_free);
        }
    }

    #[test]
    fn corpus_is_deterministic() {
        let a = instance(5, 7).unwrap();
        let b = instance(5, 7).unwrap();
        assert_eq!(a.claim, b.claim);
        assert_eq!(a.market, b.market);
    }
}

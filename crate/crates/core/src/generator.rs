//! Seeded random market instances.
//!
//! Every non-terminal node draws raw relative moves, then centers them under a
//! strictly positive witness kernel, so each node straddles zero and the tree
//! is arbitrage-free by construction.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math;
use crate::tree::{EventTree, Node};

/// Parameters of the random tree generator.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct RandomTreeSpec {
    pub depth: usize,
    pub branching: usize,
    #[cfg_attr(feature = "serde", serde(default = "default_assets"))]
    pub assets: usize,
    pub seed: u64,
    /// Maximal raw relative move per step; centered moves stay below twice
    /// this value.
    #[cfg_attr(feature = "serde", serde(default = "default_spread"))]
    pub spread: f64,
    #[cfg_attr(feature = "serde", serde(default = "default_initial"))]
    pub initial_price: f64,
}

#[cfg(feature = "serde")]
fn default_assets() -> usize {
    1
}
#[cfg(feature = "serde")]
fn default_spread() -> f64 {
    0.3
}
#[cfg(feature = "serde")]
fn default_initial() -> f64 {
    1.0
}

impl RandomTreeSpec {
    pub fn new(depth: usize, branching: usize, assets: usize, seed: u64) -> Self {
        Self {
            depth,
            branching,
            assets,
            seed,
            spread: 0.3,
            initial_price: 1.0,
        }
    }
}

/// Build the random tree described by `spec`. Two calls with the same spec
/// return identical trees.
pub fn random_tree(spec: &RandomTreeSpec) -> Result<EventTree> {
    if spec.branching < 2 {
        return Err(Error::InvalidArgument("branching must be at least 2".into()));
    }
    if spec.assets == 0 || spec.depth == 0 {
        return Err(Error::InvalidArgument("depth and assets must be positive".into()));
    }
    if !(spec.spread > 0.0 && spec.spread < 0.5) {
        return Err(Error::InvalidArgument("spread must lie in (0, 0.5)".into()));
    }
    let k = spec.branching;
    let d = spec.assets;
    let total: usize = (0..=spec.depth).map(|t| k.pow(t as u32)).sum();
    if total > 5_000_000 {
        return Err(Error::InvalidArgument("random tree too large".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut nodes = Vec::with_capacity(total);
    let mut prices = Vec::with_capacity(total * d);
    nodes.push(Node {
        time: 0,
        parent: None,
        first_child: 0,
        child_count: 0,
        prob: 1.0,
    });
    prices.extend(core::iter::repeat(spec.initial_price).take(d));
    let mut id = 0;
    while id < nodes.len() {
        let time = nodes[id].time;
        if time < spec.depth {
            let first = nodes.len();
            nodes[id].first_child = first;
            nodes[id].child_count = k;
            // Redraw nodes whose moves are nearly degenerate: numerically they
            // sit at the edge of arbitrage and only stress the solvers.
            let (raw, witness) = loop {
                let raw: Vec<f64> = (0..k * d).map(|_| rng.gen_range(-spec.spread..spec.spread)).collect();
                let witness = positive_weights(&mut rng, k);
                if well_conditioned(&raw, &witness, d, spec.spread) {
                    break (raw, witness);
                }
            };
            let p = positive_weights(&mut rng, k);
            let mut center = vec![0.0; d];
            for i in 0..k {
                for j in 0..d {
                    center[j] += witness[i] * raw[i * d + j];
                }
            }
            let parent_price: Vec<f64> = prices[id * d..(id + 1) * d].to_vec();
            for i in 0..k {
                nodes.push(Node {
                    time: time + 1,
                    parent: Some(id),
                    first_child: 0,
                    child_count: 0,
                    prob: p[i],
                });
                for j in 0..d {
                    prices.push(parent_price[j] * (1.0 + raw[i * d + j] - center[j]));
                }
            }
        }
        id += 1;
    }
    Ok(EventTree::assemble(spec.depth, d, 0, nodes, prices, Vec::new()))
}

/// Smallest singular value of the centered moves at least `spread / 20`.
fn well_conditioned(raw: &[f64], witness: &[f64], d: usize, spread: f64) -> bool {
    let k = witness.len();
    let center = math::weighted_mean(witness, raw, d);
    let centered: Vec<f64> = (0..k * d).map(|i| raw[i] - center[i % d]).collect();
    let gram = math::weighted_second_moment(&vec![1.0; k], &centered, d, &vec![0.0; d]);
    let (eig, _) = math::symmetric_eigen(&gram, d);
    let floor = spread / 20.0;
    eig.iter().all(|e| *e >= floor * floor)
}

/// Weights drawn from [0.2, 1) and normalized; the smallest stays above the
/// probability floor by a wide margin.
fn positive_weights(rng: &mut impl Rng, k: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..1.0)).collect();
    let s: f64 = w.iter().sum();
    let mut out: Vec<f64> = w.iter().map(|x| x / s).collect();
    // Force the sum to one exactly up to rounding in the last entry.
    let head: f64 = out[..k - 1].iter().sum();
    out[k - 1] = 1.0 - head;
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_is_deterministic() {
        let spec = RandomTreeSpec::new(4, 3, 1, 7);
        let a = random_tree(&spec).unwrap();
        let b = random_tree(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 1 + 3 + 9 + 27 + 81);
        let c = random_tree(&RandomTreeSpec::new(4, 3, 1, 8)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn generated_trees_are_arbitrage_free() {
        for seed in 0..20 {
            for (k, d) in [(2, 1), (3, 1), (4, 2), (3, 2)] {
                let tree = random_tree(&RandomTreeSpec::new(3, k, d, seed)).unwrap();
                assert!(tree.validate_no_arbitrage().arbitrage_free, "seed {} k {} d {}", seed, k, d);
                for id in 0..tree.len() {
                    assert!(tree.price(id).iter().all(|s| *s > 0.0));
                }
            }
        }
    }
}

//! Superreplication prices and the optional decomposition
//! `C* = C*_0 + Σ ψ*·ΔS − K*`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::lp;
use crate::math::max_abs;
use crate::measures::Measure;
use crate::tree::{Claim, EventTree, Strategy};

#[derive(Debug, Clone, PartialEq)]
pub struct SuperrepSurface {
    pub values: Vec<f64>,
    pub psi_star: Strategy,
    /// Consumption on the edge into each node (entry 0 unused).
    pub dk: Vec<f64>,
    /// Maximizing kernel of each one-step program, per edge. Entries may be
    /// zero: the maximum is taken over the closed martingale simplex.
    pub kernels: Vec<f64>,
}

impl SuperrepSurface {
    pub fn root(&self) -> f64 {
        self.values[0]
    }

    /// Cumulative `K*` per node.
    pub fn k_star(&self, tree: &EventTree) -> Vec<f64> {
        let mut k = vec![0.0; tree.len()];
        for id in 1..tree.len() {
            let p = tree.node(id).parent.unwrap_or(0);
            k[id] = k[p] + self.dk[id];
        }
        k
    }
}

/// Backward recursion `C*_node = max_q E_q[C*_child]` over the closed
/// one-step martingale simplex. Strategy and consumption are left at zero;
/// see [`optional_decomposition`].
pub fn superrep_surface(tree: &EventTree, claim: &Claim) -> Result<SuperrepSurface> {
    let d = tree.assets();
    let mut values = vec![0.0; tree.len()];
    let mut kernels = vec![0.0; tree.len()];
    kernels[0] = 1.0;
    for (id, b) in tree.terminals().zip(claim.values()) {
        values[id] = *b;
    }
    for id in tree.backward() {
        let v: Vec<f64> = tree.children(id).map(|c| values[c]).collect();
        let (level, q) = lp::max_expectation(&tree.increments(id), d, &v).ok_or(Error::NoArbitrageViolated { node: id })?;
        values[id] = level;
        for (c, x) in tree.children(id).zip(q) {
            kernels[c] = x;
        }
    }
    Ok(SuperrepSurface {
        values,
        psi_star: Strategy::zeros(tree),
        dk: vec![0.0; tree.len()],
        kernels,
    })
}

/// Fill in the minimal-norm superhedging strategy and the consumption
/// increments `ΔK_i = C*_node + ψ*·ΔS_i − C*_child ≥ 0`.
pub fn optional_decomposition(tree: &EventTree, surface: &SuperrepSurface) -> Result<SuperrepSurface> {
    let d = tree.assets();
    let mut out = surface.clone();
    for id in tree.backward() {
        let inc = tree.increments(id);
        let v: Vec<f64> = tree.children(id).map(|c| surface.values[c]).collect();
        let tol = 1e-9 * (1.0 + max_abs(&v));
        let theta = lp::min_norm_superhedge(&inc, d, &v, surface.values[id], tol).ok_or_else(|| Error::InvalidArgument(alloc::format!("node {}: superhedge infeasible at the superreplication price", id)))?;
        for (i, c) in tree.children(id).enumerate() {
            let gain: f64 = (0..d).map(|j| theta[j] * inc[i * d + j]).sum();
            out.dk[c] = surface.values[id] + gain - surface.values[c];
        }
        out.psi_star.set(id, &theta);
    }
    Ok(out)
}

/// Superreplication surface with its optional decomposition.
pub fn superreplication(tree: &EventTree, claim: &Claim) -> Result<SuperrepSurface> {
    optional_decomposition(tree, &superrep_surface(tree, claim)?)
}

/// Subreplication price `−C*(−B)` per node.
pub fn subreplication_surface(tree: &EventTree, claim: &Claim) -> Result<Vec<f64>> {
    Ok(superrep_surface(tree, &claim.scaled(-1.0))?.values.into_iter().map(|v| -v).collect())
}

/// Cumulative compensator of a supermartingale surface under `measure`:
/// `A_child = A_node + (X_node − E[X_child | node])`.
pub fn compensator_under(tree: &EventTree, values: &[f64], measure: &Measure) -> Vec<f64> {
    let mut a = vec![0.0; tree.len()];
    for id in 0..tree.len() {
        if tree.is_terminal(id) {
            continue;
        }
        let mean: f64 = tree.children(id).map(|c| measure.edge()[c] * values[c]).sum();
        for c in tree.children(id) {
            a[c] = a[id] + values[id] - mean;
        }
    }
    a
}

/// Smallest initial capital `x` with `x + G_T(ϑ) ≥ B` on every path.
pub fn superhedge_capital(tree: &EventTree, claim: &Claim, theta: &Strategy) -> f64 {
    let g = crate::tree::terminal_gains(tree, theta);
    claim
        .values()
        .iter()
        .zip(&g)
        .map(|(b, g)| b - g)
        .fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{random_tree, RandomTreeSpec};
    use crate::tree::{terminal_gains, NodeSpec};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seed11() -> (EventTree, Claim) {
        let tree = random_tree(&RandomTreeSpec::new(3, 3, 1, 11)).unwrap();
        let claim = Claim::from_fn(&tree, |s, _| (s[0] - 1.0).max(0.0)).unwrap();
        (tree, claim)
    }

    #[test]
    fn complete_binomial_has_no_consumption() {
        let spec = NodeSpec::with_children(
            1.0,
            vec![1.0],
            vec![NodeSpec::leaf(0.3, vec![1.2]), NodeSpec::leaf(0.7, vec![0.9])],
        );
        let tree = EventTree::from_spec(1, 1, &spec).unwrap();
        let claim = Claim::new(&tree, vec![0.2, 0.0]).unwrap();
        let s = superreplication(&tree, &claim).unwrap();
        // q_up = 1/3, price 0.2/3, hedge ratio 0.2/0.3.
        assert_relative_eq!(s.root(), 0.2 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(s.psi_star.get(0)[0], 2.0 / 3.0, epsilon = 1e-12);
        assert!(s.dk.iter().all(|k| k.abs() < 1e-12));
    }

    #[test]
    fn vertex_oracle_matches_simplex_on_seed_11() {
        let (tree, claim) = seed11();
        let s = superrep_surface(&tree, &claim).unwrap();
        let mut values = vec![0.0; tree.len()];
        for (id, b) in tree.terminals().zip(claim.values()) {
            values[id] = *b;
        }
        for id in tree.backward() {
            let v: Vec<f64> = tree.children(id).map(|c| values[c]).collect();
            values[id] = lp::max_expectation_simplex(&tree.increments(id), 1, &v).unwrap().0;
        }
        assert!((s.root() - values[0]).abs() <= 1e-9);
        assert!(s.root() > 0.0);
    }

    #[test]
    fn trinomial_binds_at_extreme_children() {
        let spec = NodeSpec::with_children(
            1.0,
            vec![1.0],
            vec![NodeSpec::leaf(0.25, vec![0.5]), NodeSpec::leaf(0.5, vec![1.0]), NodeSpec::leaf(0.25, vec![1.5])],
        );
        let tree = EventTree::from_spec(1, 1, &spec).unwrap();
        let claim = Claim::new(&tree, vec![0.0, 0.0, 0.5]).unwrap();
        let s = superreplication(&tree, &claim).unwrap();
        // Line through (−0.5, 0) and (0.5, 0.5): slope 1/2, level 1/4.
        assert_relative_eq!(s.root(), 0.25, epsilon = 1e-12);
        assert_relative_eq!(s.psi_star.get(0)[0], 0.5, epsilon = 1e-12);
        assert!(s.dk[1].abs() < 1e-12 && s.dk[3].abs() < 1e-12);
        assert_relative_eq!(s.dk[2], 0.25, epsilon = 1e-12);
    }

    #[test]
    fn decomposition_superhedges_pathwise_and_is_cheapest() {
        let (tree, claim) = seed11();
        let s = superreplication(&tree, &claim).unwrap();
        assert!(s.dk.iter().all(|k| *k >= -1e-10));
        let g = terminal_gains(&tree, &s.psi_star);
        for (b, g) in claim.values().iter().zip(&g) {
            assert!(s.root() + g >= b - 1e-10);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let theta = Strategy::from_fn(&tree, |_| vec![rng.gen_range(-2.0..2.0)]);
            assert!(superhedge_capital(&tree, &claim, &theta) >= s.root() - 1e-12);
        }
        // Supermartingale under every stored kernel.
        for id in tree.backward() {
            let mean: f64 = tree.children(id).map(|c| s.kernels[c] * s.values[c]).sum();
            assert!(mean <= s.values[id] + 1e-12);
        }
    }

    #[test]
    fn constants_and_homogeneity() {
        let (tree, claim) = seed11();
        let c = superreplication(&tree, &Claim::constant(&tree, 0.4)).unwrap();
        assert!(c.values.iter().all(|v| (v - 0.4).abs() < 1e-12));
        assert_eq!(c.psi_star.max_abs(), 0.0);
        let a = superrep_surface(&tree, &claim).unwrap();
        let b = superrep_surface(&tree, &claim.scaled(3.0)).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert_relative_eq!(3.0 * x, *y, epsilon = 1e-12);
        }
        let sub = subreplication_surface(&tree, &claim).unwrap();
        assert!(sub.iter().zip(&a.values).all(|(l, u)| l <= u));
    }
}

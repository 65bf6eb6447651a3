//! Property-based checks of the structural invariants.

use indiff_core::asymptotics::WeightedNormContext;
use indiff_core::bsde::{bsde_scheme, edge_identity_residual, exact_decomposition, orthogonality_residual};
use indiff_core::generator::{random_tree, RandomTreeSpec};
use indiff_core::measures::{entropy_by_steps, relative_entropy, verify_dynamic_entropy, verify_entropy_structure};
use indiff_core::superrep::superrep_surface;
use indiff_core::tree::{gains, terminal_gains};
use indiff_core::{dual_surface, indifference_surface, Claim, MarketContext, Measure, Strategy};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Case {
    market: MarketContext,
    claim: Claim,
    rng: ChaCha8Rng,
}

fn case(seed: u64, depth: usize, shape: usize) -> Case {
    let (assets, branching) = [(1, 2), (1, 3), (1, 4), (2, 3), (2, 4)][shape];
    let tree = random_tree(&RandomTreeSpec::new(depth, branching, assets, seed)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let claim = Claim::new(&tree, (0..tree.terminal_count()).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
    Case {
        market: MarketContext::new(tree).unwrap(),
        claim,
        rng,
    }
}

fn random_strategy(c: &mut Case, bound: f64) -> Strategy {
    let d = c.market.tree.assets();
    let rng = &mut c.rng;
    Strategy::from_fn(&c.market.tree, |_| (0..d).map(|_| rng.gen_range(-bound..bound)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gains_are_martingale_increments(seed in any::<u64>(), depth in 1usize..=3, shape in 0usize..5) {
        let mut c = case(seed, depth, shape);
        let theta = random_strategy(&mut c, 3.0);
        let tree = &c.market.tree;
        let g = gains(tree, &theta);
        let qe = c.market.qe();
        for id in (0..tree.len()).filter(|id| !tree.is_terminal(*id)) {
            let drift: f64 = tree.children(id).map(|ch| qe.edge()[ch] * (g[ch] - g[id])).sum();
            // The kernel is centered to the Newton tolerance per unit holding.
            let holding: f64 = theta.get(id).iter().map(|x| x.abs()).sum();
            prop_assert!(drift.abs() <= 1e-12 * holding.max(1.0));
        }
    }

    #[test]
    fn primal_and_dual_agree(seed in any::<u64>(), depth in 1usize..=3, shape in 0usize..5, log_alpha in -3.0f64..3.0) {
        let c = case(seed, depth, shape);
        let alpha = log_alpha.exp();
        let p = indifference_surface(&c.market.tree, &c.claim, alpha, c.market.qe()).unwrap();
        let d = dual_surface(&c.market.tree, &c.claim, alpha).unwrap();
        prop_assert!(p.surface.max_abs_diff(&d.surface) <= 1e-9);
    }

    #[test]
    fn value_is_one_lipschitz_in_the_claim(seed in any::<u64>(), depth in 1usize..=3, shape in 0usize..5, alpha in 0.1f64..8.0) {
        let mut c = case(seed, depth, shape);
        let other = Claim::new(&c.market.tree, c.claim.values().iter().map(|b| b + c.rng.gen_range(-0.5..0.5)).collect()).unwrap();
        let dist = c.claim.values().iter().zip(other.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let a = indifference_surface(&c.market.tree, &c.claim, alpha, c.market.qe()).unwrap();
        let b = indifference_surface(&c.market.tree, &other, alpha, c.market.qe()).unwrap();
        prop_assert!(a.surface.max_abs_diff(&b.surface) <= dist + 1e-9);
    }

    #[test]
    fn value_is_sandwiched_and_monotone_in_alpha(seed in any::<u64>(), depth in 1usize..=3, shape in 0usize..5, alpha in 0.1f64..8.0) {
        let c = case(seed, depth, shape);
        let tree = &c.market.tree;
        let qe = c.market.qe();
        let lower = qe.conditional_expectation(tree, c.claim.values());
        let upper = superrep_surface(tree, &c.claim).unwrap().values;
        let v1 = indifference_surface(tree, &c.claim, alpha, qe).unwrap().surface.values;
        let v2 = indifference_surface(tree, &c.claim, 2.0 * alpha, qe).unwrap().surface.values;
        for id in 0..tree.len() {
            prop_assert!(v1[id] >= lower[id] - 1e-9);
            prop_assert!(v1[id] <= upper[id] + 1e-9);
            prop_assert!(v2[id] >= v1[id] - 1e-9);
        }
    }

    #[test]
    fn attainable_shift_is_annihilated(seed in any::<u64>(), depth in 1usize..=3, shape in 0usize..5, alpha in 0.1f64..8.0, b in -1.0f64..1.0) {
        let mut c = case(seed, depth, shape);
        let theta = random_strategy(&mut c, 1.0);
        let tree = &c.market.tree;
        let gt = terminal_gains(tree, &theta);
        let g = gains(tree, &theta);
        let shifted = Claim::new(tree, c.claim.values().iter().zip(&gt).map(|(x, y)| x + y + b).collect()).unwrap();
        let v = indifference_surface(tree, &c.claim, alpha, c.market.qe()).unwrap().surface.values;
        let w = indifference_surface(tree, &shifted, alpha, c.market.qe()).unwrap().surface.values;
        for id in 0..tree.len() {
            prop_assert!((w[id] - v[id] - g[id] - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn decompositions_satisfy_edge_and_orthogonality_identities(seed in any::<u64>(), depth in 1usize..=3, shape in 0usize..5, alpha in 0.1f64..8.0) {
        let c = case(seed, depth, shape);
        let tree = &c.market.tree;
        let qe = c.market.qe();
        let exact = indifference_surface(tree, &c.claim, alpha, qe).unwrap();
        let routes = [bsde_scheme(tree, &c.claim, alpha, qe).unwrap(), exact_decomposition(tree, &exact.surface, qe).unwrap()];
        for sol in &routes {
            prop_assert!(edge_identity_residual(tree, sol) <= 1e-10);
            prop_assert!(orthogonality_residual(tree, sol, qe) <= 1e-10);
            for id in 1..tree.len() {
                // Compensator increments are nonnegative up to the identity
                // tolerance (nearly collinear increments leave ~1e-12 of
                // hedging error); the exact route's bracket scales them by 2/α.
                prop_assert!(sol.da[id] >= -1e-10);
                let parent = tree.node(id).parent.unwrap();
                prop_assert!(sol.qv_l[id] >= sol.qv_l[parent] - 2e-10 / alpha);
            }
        }
    }

    #[test]
    fn superreplication_is_a_supermartingale(seed in any::<u64>(), depth in 1usize..=3, shape in 0usize..5) {
        let c = case(seed, depth, shape);
        let tree = &c.market.tree;
        let sup = superrep_surface(tree, &c.claim).unwrap();
        let qe = c.market.qe();
        for id in (0..tree.len()).filter(|id| !tree.is_terminal(*id)) {
            let next: f64 = tree.children(id).map(|ch| qe.edge()[ch] * sup.values[ch]).sum();
            prop_assert!(sup.values[id] >= next - 1e-10);
            for ch in tree.children(id) {
                prop_assert!(sup.dk[ch] >= -1e-10);
            }
        }
    }

    #[test]
    fn entropy_identities_hold(seed in any::<u64>(), depth in 1usize..=3, shape in 0usize..5) {
        let c = case(seed, depth, shape);
        let tree = &c.market.tree;
        let p = Measure::reference(tree);
        prop_assert!(verify_entropy_structure(tree, &c.market.entropy) <= 1e-9);
        prop_assert!(verify_dynamic_entropy(tree, &c.market.entropy) <= 1e-9);
        let h = relative_entropy(tree, c.market.qe(), &p);
        prop_assert!((h - entropy_by_steps(tree, c.market.qe(), &p)).abs() <= 1e-10);
        prop_assert!((h - c.market.entropy.root_value()).abs() <= 1e-10);
    }

    #[test]
    fn weighted_norm_matches_terminal_second_moment(seed in any::<u64>(), depth in 1usize..=3, shape in 0usize..5) {
        let mut c = case(seed, depth, shape);
        let theta = random_strategy(&mut c, 2.0);
        let tree = &c.market.tree;
        let ctx = WeightedNormContext::new(tree, c.market.qe());
        let marg = c.market.qe().marginals(tree);
        let g = gains(tree, &theta);
        let direct: f64 = tree.terminals().map(|id| marg[id] * g[id] * g[id]).sum();
        prop_assert!((ctx.squared_norm(&theta) - direct).abs() <= 1e-10 * direct.max(1.0));
    }
}

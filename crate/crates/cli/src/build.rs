//! Materialize trees and claims from their config descriptions.

use std::fs;

use indiff_core::generator::{random_tree, RandomTreeSpec};
use indiff_core::lattice::{Lattice, LatticeSpec};
use indiff_core::{Claim, EventTree};

use crate::config::{ClaimSpec, ExplicitTree, RandomSpec, RunConfig, TreeSpec};
use crate::error::CliError;
use crate::expr::{Bindings, Expr};

pub const DEFAULT_CLAIM: &str = "call(S1, S1_0)";

fn random_spec(spec: &RandomSpec, seed: u64) -> RandomTreeSpec {
    RandomTreeSpec {
        depth: spec.depth,
        branching: spec.branching,
        assets: spec.assets,
        seed: spec.seed.unwrap_or(seed),
        spread: spec.spread,
        initial_price: spec.initial_price,
    }
}

/// Build the configured tree. `seed` fills in a random spec without its own.
pub fn tree(cfg: &RunConfig, seed: u64) -> Result<EventTree, CliError> {
    let explicit = |t: &ExplicitTree| EventTree::from_spec(t.horizon, t.assets, &t.root);
    Ok(match &cfg.tree {
        TreeSpec::Explicit(t) => explicit(t)?,
        TreeSpec::File { path } => {
            let p = cfg.resolve(path);
            let text = fs::read_to_string(&p).map_err(|e| CliError::Config(format!("{}: {}", p.display(), e)))?;
            let t: ExplicitTree = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {}", p.display(), e)))?;
            explicit(&t)?
        }
        TreeSpec::Lattice(spec) => Lattice::new(spec.clone())?.to_tree()?,
        TreeSpec::BasisRisk(b) => Lattice::new(LatticeSpec::basis_risk(b.steps, b.maturity, b.s0, b.mu, b.sigma, b.rho))?.to_tree()?,
        TreeSpec::Random(spec) => random_tree(&random_spec(spec, seed))?,
    })
}

/// Parsed claim expression, or `None` for a payoff table.
pub fn claim_expr(cfg: &RunConfig) -> Result<Option<Expr>, CliError> {
    match &cfg.claim {
        None => Ok(Some(Expr::parse(DEFAULT_CLAIM)?)),
        Some(ClaimSpec::Expr(src)) => Ok(Some(Expr::parse(src)?)),
        Some(ClaimSpec::Table(_)) => Ok(None),
    }
}

pub fn claim(cfg: &RunConfig, tree: &EventTree) -> Result<Claim, CliError> {
    match (&cfg.claim, claim_expr(cfg)?) {
        (Some(ClaimSpec::Table(v)), _) => {
            if v.len() != tree.terminal_count() {
                return Err(CliError::Config(format!("claim table has {} entries, tree has {} terminal nodes", v.len(), tree.terminal_count())));
            }
            Ok(Claim::new(tree, v.clone())?)
        }
        (_, Some(e)) => evaluate(&e, tree),
        (_, None) => unreachable!("expression claims always parse to Some"),
    }
}

pub fn evaluate(e: &Expr, tree: &EventTree) -> Result<Claim, CliError> {
    e.check_dimensions(tree.assets(), tree.aux_dim())?;
    let initial = tree.price(0).to_vec();
    let values: Vec<f64> = tree
        .terminals()
        .map(|id| {
            e.eval(&Bindings {
                price: tree.price(id),
                initial: &initial,
                aux: tree.aux(id),
            })
        })
        .collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(CliError::Config(format!("claim `{}` is not finite at terminal {}", e.source(), i)));
    }
    Ok(Claim::new(tree, values)?)
}

//! Command-line arguments and their merge into a [`RunConfig`].

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::{AlphaGrid, ClaimSpec, Command, RandomSpec, RunConfig, TreeSpec};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "indiff", version, about = "Exponential utility indifference valuation on finite event trees")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Run the command named in a config file.
    Run {
        config: PathBuf,
    },
    /// No-arbitrage checks on the tree.
    Validate(Overrides),
    /// Minimal entropy martingale measure and its structure residuals.
    Entropy(Overrides),
    /// Indifference value by the primal and the dual route, with the strategy.
    Price(Overrides),
    /// Explicit BSDE scheme against the exact decomposition, with BMO norms.
    Bsde(Overrides),
    /// Superreplication price, strategy and consumption.
    Superrep(Overrides),
    /// Convergence as risk aversion goes to zero.
    SweepSmall(Overrides),
    /// Convergence as risk aversion grows.
    SweepLarge(Overrides),
    /// Full property suite on seeded random instances.
    Verify(Overrides),
}

/// Flags shared by every command; each one overrides the config file.
#[derive(Debug, Default, Clone, clap::Args)]
pub struct Overrides {
    /// Base config; its `command` field is replaced by the subcommand.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Random tree depth (switches to a random tree if needed).
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub branching: Option<usize>,
    #[arg(long)]
    pub assets: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Comma-separated risk aversions for the sweeps.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub alpha_grid: Option<Vec<f64>>,
    /// Claim expression, e.g. `call(S1, 1.0)`.
    #[arg(long)]
    pub claim: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of random instances for `verify`.
    #[arg(long)]
    pub instances: Option<usize>,
}

impl Cmd {
    pub fn into_config(self) -> Result<RunConfig, CliError> {
        let (command, o) = match self {
            Cmd::Run { config } => return RunConfig::load(&config),
            Cmd::Validate(o) => (Command::Validate, o),
            Cmd::Entropy(o) => (Command::Entropy, o),
            Cmd::Price(o) => (Command::Price, o),
            Cmd::Bsde(o) => (Command::Bsde, o),
            Cmd::Superrep(o) => (Command::Superrep, o),
            Cmd::SweepSmall(o) => (Command::SweepSmall, o),
            Cmd::SweepLarge(o) => (Command::SweepLarge, o),
            Cmd::Verify(o) => (Command::Verify, o),
        };
        o.apply(command)
    }
}

impl Overrides {
    pub fn apply(self, command: Command) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::new(command),
        };
        cfg.command = command;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if self.depth.is_some() || self.branching.is_some() || self.assets.is_some() {
            let mut spec = match &cfg.tree {
                TreeSpec::Random(r) => r.clone(),
                _ => RandomSpec::default(),
            };
            spec.depth = self.depth.unwrap_or(spec.depth);
            spec.branching = self.branching.unwrap_or(spec.branching);
            spec.assets = self.assets.unwrap_or(spec.assets);
            cfg.tree = TreeSpec::Random(spec);
        }
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        if let Some(g) = self.alpha_grid {
            cfg.alpha_grid = Some(AlphaGrid::Points(g));
        }
        if let Some(c) = self.claim {
            cfg.claim = Some(ClaimSpec::Expr(c));
        }
        if let Some(out) = self.out {
            // Flags are relative to the working directory, not the config.
            cfg.output = std::env::current_dir().map(|d| d.join(&out)).unwrap_or(out);
        }
        if let Some(n) = self.instances {
            cfg.instances = n;
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_switch_to_a_random_tree_and_override_fields() {
        let cli = Cli::try_parse_from(["indiff", "verify", "--seed", "7", "--depth", "4", "--branching", "3", "--alpha-grid", "0.5,1,2"]).unwrap();
        let cfg = cli.command.into_config().unwrap();
        assert_eq!(cfg.command, Command::Verify);
        assert_eq!(cfg.seed, 7);
        match cfg.tree {
            TreeSpec::Random(r) => assert_eq!((r.depth, r.branching, r.assets, r.seed), (4, 3, 1, None)),
            other => panic!("unexpected tree {:?}", other),
        }
        assert_eq!(cfg.alpha_grid, Some(AlphaGrid::Points(vec![0.5, 1.0, 2.0])));
    }

    #[test]
    fn unknown_flags_are_rejected() {
        assert!(Cli::try_parse_from(["indiff", "price", "--alhpa", "1"]).is_err());
    }
}

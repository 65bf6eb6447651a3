//! Run configuration: a JSON document, optionally overridden from flags.

use std::fs;
use std::path::{Path, PathBuf};

use indiff_core::lattice::LatticeSpec;
use indiff_core::{NodeSpec, Tolerances};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Validate,
    Entropy,
    Price,
    Bsde,
    Superrep,
    SweepSmall,
    SweepLarge,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Entropy => "entropy",
            Command::Price => "price",
            Command::Bsde => "bsde",
            Command::Superrep => "superrep",
            Command::SweepSmall => "sweep-small",
            Command::SweepLarge => "sweep-large",
            Command::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitTree {
    pub horizon: usize,
    pub assets: usize,
    pub root: NodeSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSpec {
    pub depth: usize,
    pub branching: usize,
    #[serde(default = "one_usize")]
    pub assets: usize,
    /// Defaults to the run seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_spread")]
    pub spread: f64,
    #[serde(default = "one")]
    pub initial_price: f64,
}

impl Default for RandomSpec {
    fn default() -> Self {
        Self {
            depth: 3,
            branching: 3,
            assets: 1,
            seed: None,
            spread: default_spread(),
            initial_price: 1.0,
        }
    }
}

/// Traded Bachelier asset plus a correlated non-traded observable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisRiskSpec {
    pub steps: usize,
    #[serde(default = "one")]
    pub maturity: f64,
    #[serde(default = "one")]
    pub s0: f64,
    #[serde(default)]
    pub mu: f64,
    pub sigma: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TreeSpec {
    Explicit(ExplicitTree),
    /// An explicit tree stored in its own JSON file.
    File { path: PathBuf },
    Lattice(LatticeSpec),
    BasisRisk(BasisRiskSpec),
    Random(RandomSpec),
}

impl Default for TreeSpec {
    fn default() -> Self {
        TreeSpec::Random(RandomSpec::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClaimSpec {
    Expr(String),
    /// One payoff per terminal node, in node order.
    Table(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerGrid {
    /// Grid is `2^from, …, 2^to`.
    pub from: i32,
    pub to: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaGrid {
    Points(Vec<f64>),
    Powers(PowerGrid),
}

impl AlphaGrid {
    pub fn points(&self) -> Vec<f64> {
        match self {
            AlphaGrid::Points(v) => v.clone(),
            AlphaGrid::Powers(p) => indiff_core::asymptotics::power_grid(p.from, p.to),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default)]
    pub tree: TreeSpec,
    /// Defaults to an at-the-money call on the first asset.
    #[serde(default)]
    pub claim: Option<ClaimSpec>,
    #[serde(default = "one")]
    pub alpha: f64,
    /// Sweep grid; each sweep has its own default.
    #[serde(default)]
    pub alpha_grid: Option<AlphaGrid>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Number of random instances checked by `verify`.
    #[serde(default = "default_instances")]
    pub instances: usize,
    /// Directory that relative paths in the document resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn default_spread() -> f64 {
    0.3
}
fn default_output() -> PathBuf {
    PathBuf::from(".")
}
fn default_instances() -> usize {
    10
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            tree: TreeSpec::default(),
            claim: None,
            alpha: 1.0,
            alpha_grid: None,
            output: default_output(),
            seed: 0,
            tolerances: Tolerances::default(),
            instances: default_instances(),
            base_dir: PathBuf::from("."),
        }
    }

    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {}", e)))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {}", path.display(), e)))?;
        Self::from_json(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(CliError::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if let Some(grid) = &self.alpha_grid {
            let pts = grid.points();
            if pts.len() < 2 || pts.iter().any(|a| !(*a > 0.0 && a.is_finite())) || pts.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(CliError::Config("alpha grid must be positive and strictly increasing with at least two points".into()));
            }
        }
        if self.instances == 0 {
            return Err(CliError::Config("instances must be positive".into()));
        }
        let t = &self.tolerances;
        if [t.constraint, t.equality, t.rate, t.bmo_margin].iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(CliError::Config("tolerances must be finite and nonnegative".into()));
        }
        if let TreeSpec::File { path } = &self.tree {
            let p = self.resolve(path);
            if !p.is_file() {
                return Err(CliError::Config(format!("tree file {} does not exist", p.display())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, CliError> {
        RunConfig::from_json(text, Path::new("."))
    }

    #[test]
    fn defaults_fill_in() {
        let cfg = parse(r#"{"command": "sweep-small"}"#).unwrap();
        assert_eq!(cfg.command, Command::SweepSmall);
        assert_eq!(cfg.tree, TreeSpec::Random(RandomSpec::default()));
        assert_eq!(cfg.alpha, 1.0);
        assert_eq!(cfg.tolerances, Tolerances::default());
    }

    #[test]
    fn unknown_fields_are_rejected_at_every_level() {
        assert!(parse(r#"{"command": "price", "alpah": 2}"#).is_err());
        assert!(parse(r#"{"command": "price", "tree": {"kind": "random", "depth": 2, "branching": 3, "colour": 1}}"#).is_err());
        assert!(parse(r#"{"command": "price", "tolerances": {"equality": 1e-9, "slack": 1}}"#).is_err());
        assert!(parse(r#"{"command": "price", "tree": {"kind": "tetrahedral"}}"#).is_err());
        assert!(parse(r#"{"command": "bake"}"#).is_err());
    }

    #[test]
    fn tree_kinds_parse() {
        let cfg = parse(
            r#"{"command": "price", "tree": {"kind": "lattice", "steps": 2, "factors": 1,
                "moves": [{"shift": [1], "p": 0.5}, {"shift": [0], "p": 0.5}],
                "assets": [{"base": 1.0, "drift": -0.1, "loading": [0.2]}]},
                "claim": {"expr": "call(S1, 1)"}, "alpha_grid": {"from": -2, "to": 1}}"#,
        )
        .unwrap();
        assert!(matches!(cfg.tree, TreeSpec::Lattice(_)));
        assert_eq!(cfg.alpha_grid.unwrap().points(), vec![0.25, 0.5, 1.0, 2.0]);
        let cfg = parse(r#"{"command": "price", "tree": {"kind": "explicit", "horizon": 1, "assets": 1, "root": {"price": [1], "children": [{"p": 0.5, "price": [2]}, {"p": 0.5, "price": [0]}]}}, "claim": {"table": [1, 0]}}"#).unwrap();
        assert!(matches!(cfg.tree, TreeSpec::Explicit(_)));
        assert_eq!(cfg.claim, Some(ClaimSpec::Table(vec![1.0, 0.0])));
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let mut cfg = RunConfig::new(Command::Price);
        cfg.alpha = 0.0;
        assert!(cfg.validate().is_err());
        cfg.alpha = 1.0;
        cfg.alpha_grid = Some(AlphaGrid::Points(vec![1.0, 0.5]));
        assert!(cfg.validate().is_err());
        cfg.alpha_grid = None;
        cfg.tree = TreeSpec::File { path: PathBuf::from("definitely/not/here.json") };
        assert!(cfg.validate().is_err());
    }
}

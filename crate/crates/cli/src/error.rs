use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("claim expression: {0}")]
    Expr(#[from] crate::expr::ExprError),

    #[error("writing {path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("check `{name}` failed at {location}: margin {margin:e} (tolerance {tolerance:e})")]
    Check {
        name: String,
        location: String,
        margin: f64,
        tolerance: f64,
    },

    #[error(transparent)]
    Core(#[from] indiff_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.code())
    }

    pub fn code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Expr(_) | CliError::Io { .. } => 1,
            CliError::Check { .. } => 2,
            // Arbitrage in the input is a failed market check, not bad syntax.
            CliError::Core(indiff_core::Error::NoArbitrageViolated { .. }) => 2,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(indiff_core::Error::NonMartingaleKernel { .. }) => 3,
            CliError::Core(_) => 1,
        }
    }
}

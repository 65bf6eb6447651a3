//! Batch driver: reads a run config, executes one command on an event tree
//! and writes `<command>-<seed>.csv` plus `<command>-<seed>.json`.
//!
//! Exit codes: 0 when every check passes, 1 for configuration errors, 2 for
//! a failed check (reported with the worst node and its margin), 3 for a
//! numerical failure.

pub mod args;
pub mod build;
pub mod commands;
pub mod config;
pub mod error;
pub mod expr;
pub mod output;

pub use commands::{run, Artifacts};
pub use config::{Command, RunConfig};
pub use error::CliError;

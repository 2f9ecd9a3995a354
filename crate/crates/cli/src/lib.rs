//! Batch experiment runner for the `fracburgers` solver.
//!
//! A run is described by one JSON [`config::ExperimentConfig`]. Running it
//! writes a directory `<root>/<run-id>/` holding `record.json`, `scalars.csv`,
//! `snapshots/`, `diagnostics.json` and `summary.txt`.

// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod barrier;
pub mod config;
pub mod diagnostics;
pub mod initial;
pub mod runner;
pub mod store;

use std::path::PathBuf;

pub use config::{parse_config, ExperimentConfig};
pub use runner::{run_experiment, RunOutcome};
pub use store::{list_runs, RunRecord, RunStatus};

/// Tag mixed into every run id.
pub const VERSION_TAG: &str = concat!("fracburgers-", env!("CARGO_PKG_VERSION"));

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "FRACBURGERS_OUT";

/// Top-level error with a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("numerical abort: {0}")]
    Numerical(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io { .. } => 4,
        }
    }
}

impl From<config::ConfigError> for CliError {
    fn from(e: config::ConfigError) -> Self {
        match e {
            config::ConfigError::Io { path, source } => CliError::Io { path, source },
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<store::StoreError> for CliError {
    fn from(e: store::StoreError) -> Self {
        match e {
            store::StoreError::Io { path, source } => CliError::Io { path, source },
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<diagnostics::DiagnosticError> for CliError {
    fn from(e: diagnostics::DiagnosticError) -> Self {
        match e {
            diagnostics::DiagnosticError::Numerical(m) => CliError::Numerical(m),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<barrier::BarrierSpecError> for CliError {
    fn from(e: barrier::BarrierSpecError) -> Self {
        match e {
            barrier::BarrierSpecError::Io { path, source } => CliError::Io { path, source },
            barrier::BarrierSpecError::Numerical(m) => CliError::Numerical(m),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<initial::InitialError> for CliError {
    fn from(e: initial::InitialError) -> Self {
        match e {
            initial::InitialError::Store(s) => s.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

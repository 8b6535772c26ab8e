//! Command-line front end for the AACHER library: configuration loading,
//! multi-seed sweeps, CSV metrics and aggregation.

use std::path::Path;

use thiserror::Error;

pub mod cli;
pub mod config;
pub mod metrics;
pub mod sweep;

pub use config::{FileConfig, RunConfig};
pub use metrics::{aggregate, AggregateRow, Summary};
pub use sweep::{run_sweep, RunOutcome, SweepReport};

#[derive(Debug, Error, PartialEq)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Io(String),
    #[error("{failed} of {total} runs failed (details in {summary})")]
    RunsFailed {
        failed: usize,
        total: usize,
        summary: String,
    },
}

impl CliError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

//! Experiment harness around the `proxnewton` solver: parameter sweeps over
//! the penalty weight, paired exact/inexact runs and CSV telemetry.

use std::io;
use std::path::PathBuf;

pub mod config;
pub mod runner;

pub use config::{parse_config, ExperimentConfig, ModeArg, NormArg};
pub use runner::{run_experiment, RunSummary};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Clap(#[from] clap::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Clap(e) => u8::try_from(e.exit_code()).unwrap_or(2),
            Self::Usage(_) => 2,
            Self::Io { .. } => 3,
        }
    }
}

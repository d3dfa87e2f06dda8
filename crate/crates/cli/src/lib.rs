//! Experiment runner for master-sample coverage attacks on synthetic worlds.
//!
//! A TOML configuration selects the world, the optimizers, the predictor
//! filter and the attack mode; [`run_experiment`] runs every optimizer on
//! every seed, checkpointing each run, and writes traces, coverage reports and
//! summary tables to the output directory.

pub mod config;
pub mod experiment;
pub mod runs;
pub mod summary;

pub use config::{CoverageMode, ExperimentConfig, OptimizerChoice, ThresholdPolicy};
pub use experiment::{
    locate_resume, recompute_from_masters, run_experiment, Calibration, RunOptions, Setup,
};
pub use summary::{Summary, SummaryRow};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("output error: {0}")]
    Output(String),

    #[error(transparent)]
    Run(#[from] mastersample::Error),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Run(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Run(e.into())
    }
}

impl CliError {
    /// 1 for configuration errors, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 1,
            Self::Output(_) | Self::Run(_) => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

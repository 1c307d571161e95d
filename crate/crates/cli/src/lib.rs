//! Experiment runner: JSON configs in, `run.json` and CSV tables out.

use std::path::PathBuf;

pub mod config;
pub mod experiments;
pub mod report;

pub use config::{ExperimentConfig, ExperimentId};
pub use experiments::run_experiment;
pub use report::{emit_report, Bound, CheckRow, RunReport, Table};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("unknown experiment `{0}`; run `emlab list` for the ids")]
    UnknownExperiment(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

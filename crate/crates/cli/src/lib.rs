//! Experiment driver: reads a TOML configuration, runs one verification
//! task, and writes `report.txt`, `report.csv`, per-task CSVs and a
//! gnuplot script.

pub mod config;
pub mod context;
pub mod report;
pub mod run;
pub mod tasks;

pub use config::ExperimentConfig;
pub use report::{RunReport, Section};
pub use run::{execute, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("computation failed: {0}")]
    Compute(#[from] phlab::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    /// 2 for usage errors, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

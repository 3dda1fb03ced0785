//! Experiment runner for finite-time push-sum consensus, gradient descent and privacy audits.

pub mod config;
pub mod output;
pub mod scenario;

pub use config::{ExperimentConfig, Scenario};
pub use scenario::{run_scenario, write_output, ScenarioOutput};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config line {line}, field `{field}`: {msg}")]
    Config { line: usize, field: String, msg: String },
    #[error("invalid `{field}`: {msg}")]
    Invalid { field: String, msg: String },
    #[error(transparent)]
    Core(#[from] prftps::Error),
    #[error("i/o: {0}")]
    Io(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

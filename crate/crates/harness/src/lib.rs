//! Scenario runner, data adapters and plotting around the `amset` library.

pub mod data;
pub mod methods;
pub mod output;
pub mod plot;
pub mod runner;
pub mod scenario;

pub use methods::Method;
pub use output::ResultRow;
pub use runner::{run_scenario, run_scenario_detailed, run_scenario_with_threads};
pub use scenario::{builtin_scenarios, find_scenario, ScenarioConfig};

/// Name of the environment variable that fixes the worker thread count.
pub const THREADS_ENV: &str = "AMSET_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("unknown method label {0:?}")]
    UnknownMethod(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] amset::Error),
    #[error("{path}: row {row}, column {column}: {reason}")]
    Parse {
        path: String,
        row: usize,
        column: usize,
        reason: String,
    },
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

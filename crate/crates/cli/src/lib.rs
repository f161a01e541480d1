//! Scenario runner for the rydgate simulator: config handling, the four run
//! modes and their CSV/JSON artifacts.

pub mod config;
pub mod modes;

use rydgate::dynamics::DynamicsError;
use rydgate::fidelity::FidelityError;
use rydgate::scenario::ScenarioError;
use thiserror::Error;

pub use config::{Metric, Mode, RunConfig, SweepConfig, SweepParameter, SweepScale};
pub use modes::{execute, Artifacts};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("regime validation failed: {0}")]
    Regime(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Regime(_) => 3,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Dynamics(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<FidelityError> for CliError {
    fn from(e: FidelityError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<DynamicsError> for CliError {
    fn from(e: DynamicsError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

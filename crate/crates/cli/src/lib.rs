//! Library side of the `ssctm` command: scenario files, subcommands and run
//! manifests.

pub mod commands;
pub mod config;
pub mod manifest;

use thiserror::Error;

pub use commands::{execute, replay, Command, Outcome};
pub use config::{load_config, parse_config, write_config, ConfigFile, Scenario};
pub use manifest::Manifest;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("unsupported scale: {0}")]
    Unsupported(String),
    #[error("{0}")]
    Model(ssctm_core::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<ssctm_core::Error> for CliError {
    fn from(e: ssctm_core::Error) -> Self {
        use ssctm_core::Error as E;
        match e {
            E::Validation { field, reason } => CliError::Validation { field, reason },
            E::SubproblemInfeasible { .. } => CliError::Infeasible(e.to_string()),
            E::TooLarge { .. } | E::GridTooLarge { .. } | E::Unsupported { .. } => {
                CliError::Unsupported(e.to_string())
            }
            E::Io(m) => CliError::Io(m),
            other => CliError::Model(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl CliError {
    /// 2 for bad input, 3 for an infeasible design, 4 for unsupported scale.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) | CliError::Validation { .. } => 2,
            CliError::Infeasible(_) => 3,
            CliError::Unsupported(_) => 4,
            CliError::Model(_) | CliError::Io(_) => 1,
        }
    }
}

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::commands::Command;
use crate::config::ConfigFile;
use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub name: String,
    pub bytes: u64,
}

/// Everything needed to rerun a command: the resolved scenario and the
/// command with its flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub config: ConfigFile,
    pub seed: Option<u64>,
    pub replications: Option<usize>,
    pub rng: String,
    pub threads: Option<usize>,
    pub runtime_s: f64,
    pub exit_code: i32,
    pub message: Option<String>,
    pub outputs: Vec<OutputFile>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Io(e.to_string()))?;
        std::fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
        Ok(())
    }
}

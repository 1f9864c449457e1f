//! Run orchestration for the predator-prey simulator: configuration
//! presets, the `simulate`, `train`, `mixed` and `analyze` pipelines, CSV
//! telemetry, JSON checkpoints and SVG reports.

pub mod cli;
pub mod config;
pub mod report;
pub mod run;
mod svg;
pub mod telemetry;

use std::fmt;
use std::path::Path;

pub use config::{PolicyFractions, RunConfig};

/// Failure of a command, mapped to the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration, flags or missing referenced files.
    Config(String),
    /// Malformed input data.
    Input(String),
    /// Failure while running: IO, non-finite training, internal errors.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> CliError {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

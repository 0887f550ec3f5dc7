//! Harness errors, split into the two exit-code classes the CLI reports:
//! configuration problems (exit 1) and runtime failures (exit 2).

use std::path::PathBuf;

use thiserror::Error;

use groups_core::{LearnError, PolicyError, SimError};

/// Anything the harness can fail with.
#[derive(Debug, Error)]
pub enum HarnessError {
    /// The config file could not be read.
    #[error("config {path}: {message}")]
    ConfigRead { path: PathBuf, message: String },
    /// The config file is not valid JSON or violates the schema. The message
    /// keeps serde's line/column context.
    #[error("config {path}: {message}")]
    ConfigParse { path: PathBuf, message: String },
    /// The config parsed but the values are unusable.
    #[error("config: {0}")]
    ConfigInvalid(String),
    /// The calibration document failed to load or validate.
    #[error("calibration: {0}")]
    Calibration(#[from] SimError),
    /// A transfer run pointed at a source study that is absent or unreadable.
    #[error("source run {path}: {message}")]
    SourceRun { path: PathBuf, message: String },
    /// Plot or aggregation inputs are unusable (empty, ragged, unparseable).
    #[error("{0}")]
    InvalidInput(String),
    #[error("policy: {0}")]
    Policy(#[from] PolicyError),
    #[error("learning failed: {0}")]
    Learn(#[from] LearnError),
    /// Filesystem failure while reading or writing run artifacts.
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl HarnessError {
    /// The process exit code this error class maps to: 1 for configuration
    /// errors, 2 for runtime failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::ConfigRead { .. }
            | HarnessError::ConfigParse { .. }
            | HarnessError::ConfigInvalid(_)
            | HarnessError::Calibration(_) => 1,
            HarnessError::SourceRun { .. }
            | HarnessError::InvalidInput(_)
            | HarnessError::Policy(_)
            | HarnessError::Learn(_)
            | HarnessError::Io { .. } => 2,
        }
    }
}

/// Shorthand for fallible harness operations.
pub type Result<T> = std::result::Result<T, HarnessError>;

pub(crate) fn io_error(path: &std::path::Path, err: std::io::Error) -> HarnessError {
    HarnessError::Io { path: path.to_path_buf(), message: err.to_string() }
}

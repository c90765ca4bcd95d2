//! Harness-level error type. Config problems and runtime problems are kept
//! apart so the CLI can map them to distinct exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Malformed configuration or command line; reported with a field path.
    #[error("config: {0}")]
    Config(String),

    /// Anything that goes wrong while executing a valid configuration.
    #[error("runtime: {0}")]
    Runtime(String),

    #[error("io: {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] nonsub::Error),
}

impl HarnessError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// CLI exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

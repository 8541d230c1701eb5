use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("wav error on {path}: {message}")]
    Wav { path: PathBuf, message: String },

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("checkpoint error at byte offset {offset}: {message}")]
    Checkpoint { offset: u64, message: String },

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn shape(
        context: impl Into<String>,
        expected: impl Into<String>,
        actual: impl Into<String>,
    ) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.into(),
            actual: actual.into(),
        }
    }

    /// Process exit code class for the CLI: 2 usage, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) => 2,
            Error::Numeric(_) => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

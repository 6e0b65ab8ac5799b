//! Crate-wide error type, grouped by the process exit code each class maps to.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad or inconsistent configuration (exit code 2).
    #[error("config error: {0}")]
    Config(String),

    /// Missing, malformed, or inconsistent data (exit code 3).
    #[error("data error: {0}")]
    Data(String),

    /// Numerical failure such as divergence during training (exit code 4).
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("hdf5 error: {0}")]
    Hdf5(#[from] hdf5::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) | Error::Io { .. } | Error::Hdf5(_) | Error::Json(_) => 3,
            Error::Numerical(_) => 4,
        }
    }
}

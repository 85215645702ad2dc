use std::path::PathBuf;

use tagi::TagiError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    /// A numerical self-check did not hold.
    #[error("check failed: {0}")]
    Check(String),
    #[error(transparent)]
    Core(#[from] TagiError),
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }

    /// Process exit status: 2 usage/config, 3 data or I/O, 4 numerical failure, 5 other.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Core(TagiError::Config(_)) => 2,
            HarnessError::Data(_) | HarnessError::Io { .. } | HarnessError::Core(TagiError::Data(_)) => 3,
            HarnessError::Check(_) | HarnessError::Core(TagiError::NonFinite(_)) => 4,
            HarnessError::Core(_) => 5,
        }
    }
}

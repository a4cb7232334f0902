use std::path::PathBuf;

use thiserror::Error;

use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed data: {0}")]
    Format(String),
    #[error("incompatible inputs: {0}")]
    Compatibility(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("non-finite value during {0}")]
    NonFinite(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Folds any error into the numerics error type, for closures handed
    /// to the finite-difference checker.
    pub(crate) fn into_numerics(self) -> NumericsError {
        match self {
            Error::Numerics(n) => n,
            other => NumericsError::Config(other.to_string()),
        }
    }
}

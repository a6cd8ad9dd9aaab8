use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("out of bounds: {0}")]
    Bounds(String),
    #[error("wrong model mode: {0}")]
    Mode(String),
    #[error("schedule: {0}")]
    Schedule(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("data integrity: {0}")]
    Integrity(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 configuration, 3 data integrity, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_) | Error::Mode(_) | Error::Schedule(_) | Error::Config(_) | Error::Bounds(_) => 2,
            Error::Integrity(_) | Error::Io { .. } => 3,
            Error::Numerical(_) => 4,
        }
    }
}

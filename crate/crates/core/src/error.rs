use thiserror::Error;

use crate::lp::LpStatus;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid {what}: {why}")]
    Invalid { what: &'static str, why: String },

    #[error("{what} did not converge within {iterations} iterations")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
    },

    #[error("numerical failure in {context}: {why}")]
    Numerical {
        context: &'static str,
        why: String,
    },

    #[error("linear program ended with status {status:?}")]
    Lp { status: LpStatus },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: u64,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{path}: {source}")]
    IoPath {
        path: String,
        source: std::io::Error,
    },
}

/// Reads a file, attaching the path to any failure.
pub fn read_to_string(path: &str) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::IoPath {
        path: path.to_owned(),
        source,
    })
}

/// Writes a file, attaching the path to any failure.
pub fn write_file(path: &str, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::IoPath {
        path: path.to_owned(),
        source,
    })
}

impl Error {
    pub(crate) fn invalid(what: &'static str, why: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            why: why.into(),
        }
    }

    pub(crate) fn numerical(context: &'static str, why: impl Into<String>) -> Self {
        Error::Numerical {
            context,
            why: why.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

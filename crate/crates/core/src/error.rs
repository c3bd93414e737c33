use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SkyError {
    /// A numerical argument outside the domain of a model function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed caller input (action out of range, shape mismatch, ...).
    #[error("invalid input: {0}")]
    Input(String),

    /// A call made in a state where its precondition does not hold.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Training produced a non-finite loss.
    #[error("training diverged: {0}")]
    Diverged(String),

    /// An oracle was asked for an enumeration larger than its cost guard.
    #[error("cost guard: {0}")]
    CostGuard(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl SkyError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SkyError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        SkyError::Csv {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, SkyError>;

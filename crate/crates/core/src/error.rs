use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    /// A scenario value violates its schema constraint.
    #[error("invalid scenario: `{key}` {constraint}")]
    Invalid { key: String, constraint: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error(
        "CFL condition violated for {context}: CFL number {cfl:.3} > 1; \
         increase grid.num_time_steps to at least {required_steps}"
    )]
    Cfl {
        context: String,
        cfl: f64,
        required_steps: usize,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(key: impl Into<String>, constraint: impl Into<String>) -> Self {
        Error::Invalid {
            key: key.into(),
            constraint: constraint.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

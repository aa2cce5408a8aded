use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid value for `{key}`: {constraint}")]
    Invalid { key: String, constraint: String },

    #[error("failed to parse scenario: {0}")]
    Parse(String),

    #[error("numerical divergence at t = {time_s} s: {detail}")]
    Divergence { time_s: f64, detail: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub fn invalid(key: impl Into<String>, constraint: impl Into<String>) -> Self {
        Error::Invalid { key: key.into(), constraint: constraint.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

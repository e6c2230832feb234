use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing artifact: {0}")]
    MissingArtifact(PathBuf),

    #[error("malformed input {path} line {line}: {reason}")]
    Malformed {
        path: String,
        line: u64,
        reason: String,
    },

    #[error("artifact {path}: expected version `{expected}`, found `{found}`")]
    Version {
        path: String,
        expected: String,
        found: String,
    },

    #[error("invalid config key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("not enough data: need at least {needed}, got {got} ({what})")]
    Sizing {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("undefined metric: {0}")]
    UndefinedMetric(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}

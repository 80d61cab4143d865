use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("pings for device {device} are not sorted by time (t={prev} followed by t={next})")]
    UnsortedTrace { device: String, prev: i64, next: i64 },

    #[error("degenerate polygon for tract {0}: fewer than 3 distinct vertices")]
    DegeneratePolygon(String),

    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("empty {which} set for test day {test_day} under {delay}h delay")]
    EmptySplit {
        which: &'static str,
        test_day: usize,
        delay: usize,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}

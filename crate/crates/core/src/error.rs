use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised across the calibration toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("route probabilities of OD {od_id} sum to {sum} (expected 1 within 1e-9)")]
    Normalization { od_id: u32, sum: f64 },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("scenario generation failed: {0}")]
    Generation(String),
    #[error("travel-time table is missing {} route(s): {missing:?}", missing.len())]
    Coverage { missing: Vec<u32> },
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("i/o error on '{}': {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
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

    /// Process exit code for the command-line driver: 3 for numeric failures,
    /// 2 for everything else (input, configuration and I/O problems).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric(_) => 3,
            _ => 2,
        }
    }
}

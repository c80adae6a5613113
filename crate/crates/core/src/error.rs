use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("empty shape {0:?}")]
    EmptyShape((usize, usize)),

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("gradient error: {0}")]
    Gradient(String),

    #[error("format error at row {row}: {msg}")]
    Format { row: usize, msg: String },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("query time {t} outside the open span ({start}, {end})")]
    Range { t: f64, start: f64, end: f64 },

    #[error("training diverged at epoch {epoch}; last finite loss {last_finite_loss} at epoch {last_finite_epoch}")]
    Divergence {
        epoch: usize,
        last_finite_epoch: usize,
        last_finite_loss: f64,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input or configuration rather than a
    /// failure while running.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Parameter(_)
                | Error::Range { .. }
                | Error::Format { .. }
                | Error::Input(_)
                | Error::Serde(_)
        )
    }
}

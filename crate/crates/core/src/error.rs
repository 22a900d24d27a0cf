use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the training engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("node {0} has zero degree")]
    IsolatedNode(usize),

    #[error("graph is disconnected after {0} sampling attempts")]
    Disconnected(usize),

    #[error("no derivative lower bound for {0}; use 0")]
    DerivativeBoundUnavailable(&'static str),

    #[error("strong-monotonicity modulus {0:e} is too small for adaptive steps; use operator extrapolation")]
    ModulusTooSmall(f64),

    #[error("non-finite value produced in {0}")]
    NonFinite(&'static str),

    #[error("network has no graph but layer {0} uses a graph filter")]
    GraphMissing(usize),

    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("{path}: line {line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

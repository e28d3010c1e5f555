use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("matrix is not symmetric (|a[{row},{col}] - a[{col},{row}]| = {gap:e})")]
    NonSymmetric { row: usize, col: usize, gap: f64 },

    #[error("negative Hessian is singular: {0}")]
    SingularHessian(String),

    #[error("objective is not finite at the starting point")]
    NonFinite,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid probability {value} at row {row}")]
    InvalidProbability { row: usize, value: f64 },

    #[error("label {0} is constant in the training rows")]
    DegenerateLabel(usize),

    #[error("exhaustive inference refuses {labels} labels (cap {cap})")]
    TooManyLabels { labels: usize, cap: usize },

    #[error("unknown model id `{0}` (expected M1..M12)")]
    UnknownModel(String),

    #[error("unknown {kind} `{name}`; registered: {known}")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        known: String,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown label name `{0}`")]
    UnknownLabelName(String),

    #[error("label attribute `{name}` has non-binary value `{value}` at line {line}")]
    NonBinaryLabel {
        name: String,
        value: String,
        line: usize,
    },

    #[error("all rows are identical; no variance to decompose")]
    NoVariance,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("fitting chain link {link}: {source}")]
    Link {
        link: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("cross-validation fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {inner}")]
    Io {
        path: PathBuf,
        inner: std::io::Error,
    },

    #[error("csv parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("zero variance in column {column}; cannot standardize")]
    ZeroVariance { column: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unsupported constraint: {0}")]
    UnsupportedConstraint(String),

    #[error("costs are not representable as integers at resolution {resolution}; use the branch-and-bound solver")]
    NonRepresentableCosts { resolution: u32 },

    #[error("instance too large for enumeration: {combinations} combinations")]
    TooLarge { combinations: f64 },

    #[error("undefined quantity: {0}")]
    Undefined(String),

    #[error("solver failed at budget {budget}: {message}")]
    SolverAtBudget { budget: f64, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("{context}: {inner}")]
    Context { context: String, inner: Box<Error> },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            inner: source,
        }
    }

    /// Wraps the error with a description of what was being attempted.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            inner: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

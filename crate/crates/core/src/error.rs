//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by dataset ingestion, model fitting, and study drivers.
///
/// Variants are grouped into data/configuration problems (rejected input)
/// and numerical problems (a fit that could not be completed); the CLI maps
/// the former to exit code 2 and the latter to exit code 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("csv read failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("missing column '{0}'")]
    MissingColumn(String),
    #[error("subject '{subject}': non-constant {field} (saw {a} and {b})")]
    NonConstantScalar {
        subject: String,
        field: String,
        a: f64,
        b: f64,
    },
    #[error("subject '{subject}', row {row}: non-finite value in column '{column}'")]
    NonFiniteValue {
        subject: String,
        row: usize,
        column: String,
    },
    #[error("subject '{subject}': duplicate time {time}")]
    DuplicateTime { subject: String, time: f64 },
    #[error("subject '{subject}': {message}")]
    InvalidSubject { subject: String, message: String },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("mediator index {index} out of range 1..={count}")]
    MediatorIndexOutOfRange { index: usize, count: usize },
    #[error("singular cross-product matrix in {context}")]
    SingularMatrix { context: String },
    #[error("covariance matrix for subject '{subject}' is numerically singular")]
    SingularCovariance { subject: String },
    #[error("insufficient data for {context}: need {needed}, have {have}")]
    InsufficientData {
        context: String,
        needed: usize,
        have: usize,
    },
    #[error("numerical failure in {context}: {message}")]
    Numerical { context: String, message: String },
}

impl Error {
    /// True for errors caused by bad input rather than a failed computation.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::SingularMatrix { .. }
                | Error::SingularCovariance { .. }
                | Error::Numerical { .. }
        )
    }
}

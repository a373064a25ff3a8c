//! Crate-wide error type and exit-code mapping.

use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A type invariant was violated at construction.
    #[error("invalid {what}: {message}")]
    Invalid { what: &'static str, message: String },

    /// A function returned a non-finite value at a support point.
    #[error("non-finite evaluation of {what} at atom {point:?}: {value}")]
    Evaluation {
        what: String,
        point: Vec<f64>,
        value: f64,
    },

    /// An argument was outside its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A state-space or resource cap was exceeded.
    #[error("size error: {0}")]
    Size(String),

    /// A grid or domain was too small for the requested computation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A non-finite intermediate appeared during iteration.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Expression syntax error, with the byte offset of the failure.
    #[error("syntax error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    /// Configuration file problem.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 for configuration/usage problems,
    /// 3 for numeric failures. Exit code 1 is reserved for property
    /// violations and is produced by the check command, not by errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invalid { .. }
            | Error::Parameter(_)
            | Error::Size(_)
            | Error::Domain(_)
            | Error::Parse { .. }
            | Error::Config(_)
            | Error::Io(_)
            | Error::Json(_) => 2,
            Error::Evaluation { .. } | Error::Numeric(_) => 3,
        }
    }
}

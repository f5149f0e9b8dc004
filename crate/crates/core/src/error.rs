use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    Shape {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("zero-norm hypervector")]
    ZeroNorm,

    #[error("base matrix is numerically rank deficient (smallest singular value {smallest:e}, largest {largest:e})")]
    RankDeficient { smallest: f64, largest: f64 },

    #[error("operation not supported for the sin-cos activation: {0}")]
    ForwardOnly(&'static str),

    #[error("unknown label {0}")]
    UnknownLabel(u32),

    #[error("duplicate label {0}")]
    DuplicateLabel(u32),

    #[error("phase error: {operation} requires {required}, model is in {actual}")]
    Phase {
        operation: &'static str,
        required: &'static str,
        actual: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("truncated input: expected {expected} bytes, missing {missing}")]
    Truncated { expected: u64, missing: u64 },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, actual: usize, context: &'static str) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Shape {
            expected,
            actual,
            context,
        })
    }
}

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the estimators and the tensor interchange layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed npy file {path}: {reason}")]
    MalformedNpy { path: PathBuf, reason: String },

    #[error("unsupported dtype {descr:?} in {path} (expected <f4 or <f8)")]
    UnsupportedDtype { path: PathBuf, descr: String },

    #[error("non-finite value at flat index {index} in {path}")]
    NonFinite { path: PathBuf, index: usize },

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("{path}: first dimension {found} does not match batch size {expected}")]
    BatchSizeMismatch {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("dimension mismatch: expected n = {expected}, found n = {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("degenerate kernel bandwidth (sigma = {0})")]
    DegenerateBandwidth(f64),

    #[error("matrix is not a valid normalized Gram matrix: {0}")]
    InvalidGram(String),

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("Hadamard product trace underflowed to zero after {factors} factors")]
    TraceUnderflow { factors: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Short machine-readable tag, used by the CLI error record.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::MalformedNpy { .. } => "malformed_npy",
            Error::UnsupportedDtype { .. } => "unsupported_dtype",
            Error::NonFinite { .. } => "non_finite",
            Error::Manifest(_) => "manifest",
            Error::BatchSizeMismatch { .. } => "batch_size_mismatch",
            Error::IndexOutOfRange(_) => "index_out_of_range",
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::Empty(_) => "empty_input",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::DegenerateBandwidth(_) => "degenerate_bandwidth",
            Error::InvalidGram(_) => "invalid_gram",
            Error::Eigen(_) => "eigen",
            Error::TraceUnderflow { .. } => "trace_underflow",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

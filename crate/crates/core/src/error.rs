use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("map is constant (all SOS coefficients are zero) and cannot be inverted")]
    NotInvertible,

    #[error("root finding did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("unknown dataset '{0}'")]
    UnknownDataset(String),

    #[error("parse error at row {row}, column {col}: {message}")]
    Parse { row: usize, col: usize, message: String },

    #[error("no data rows")]
    EmptyData,

    #[error("invalid split fractions: {0}")]
    InvalidFractions(String),

    #[error("integer overflow computing {0}")]
    Overflow(&'static str),

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    FormatVersionMismatch { found: u32, expected: u32 },

    #[error("checkpoint payload checksum mismatch: header says {expected:08x}, payload hashes to {found:08x}")]
    ChecksumMismatch { expected: u32, found: u32 },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("malformed checkpoint: {0}")]
    Format(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

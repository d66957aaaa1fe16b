use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite component at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("invalid metric parameter p = {0} (must satisfy 0 < p <= 2)")]
    InvalidMetric(f64),

    #[error("p = {p} is outside the supported range [{lo}, {hi}]")]
    UnsupportedP { p: f64, lo: f64, hi: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("requested {requested} items but only {available} are available")]
    TooFew { requested: usize, available: usize },

    #[error("{path}: {msg} (record {record}, byte offset {offset})")]
    Format {
        path: PathBuf,
        record: usize,
        offset: u64,
        msg: String,
    },

    #[error("{path}: no records")]
    NoRecords { path: PathBuf },

    #[error("corrupt snapshot: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParam(msg.into())
    }
}

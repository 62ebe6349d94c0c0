use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    #[error("integer overflow in exact arithmetic ({0})")]
    Overflow(&'static str),

    #[error("invalid number specification: {0}")]
    InvalidNumber(String),

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("invalid sampler: {0}")]
    InvalidSampler(String),

    #[error("non-contracting rule {rule}: expansion {expansion} is not > 1")]
    NonContracting { rule: usize, expansion: f64 },

    #[error("inconsistent path: {0}")]
    InconsistentPath(String),

    #[error("horizon exhausted: {0}")]
    Horizon(String),

    #[error("vector {0:?} is not in the return-vector group")]
    NotInGroup(Vec<i64>),

    #[error("group inclusion failed: {0}")]
    Inclusion(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("did not converge: {0}")]
    NotConverged(String),
}

pub type Result<T> = std::result::Result<T, Error>;

//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by dataset handling, training, aggregation, the ledger,
/// and the simulation driver.
#[derive(Debug, Error)]
pub enum Error {
    /// A structurally invalid configuration (sizes, fractions, counts).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Vector or feature dimensions that do not line up.
    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    /// A call with arguments outside the documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Malformed dataset file content. `row` is 1-based.
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    /// Hash-chain violation detected at the given block index.
    #[error("ledger integrity violation at block {index}")]
    Integrity { index: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

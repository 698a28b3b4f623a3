//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by dataset handling, model construction, and training.
#[derive(Debug, Error)]
pub enum TtcdError {
    /// Array or tensor shape does not match what an operation requires.
    #[error("shape error: {0}")]
    Shape(String),

    /// A CSV or config file could not be parsed.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Invalid configuration or argument value.
    #[error("invalid config: {0}")]
    Config(String),

    /// A domain-level failure, e.g. the thresholded contemporaneous
    /// subgraph contains a cycle.
    #[error("{0}")]
    Domain(String),

    /// A loss term or parameter became NaN/Inf.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, TtcdError>;

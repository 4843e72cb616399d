//! Crate-wide error type.

use thiserror::Error;

/// Unified error for all lab modules.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A public numeric operation received NaN or infinite input.
    #[error("non-finite numeric input: {0}")]
    NumericInput(String),

    /// A class label or element index is out of range.
    #[error("index out of range: {0}")]
    Index(String),

    /// Invalid configuration value or combination.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A dataset violates a structural requirement (empty, mislabeled, ...).
    #[error("invalid data: {0}")]
    Data(String),

    /// A text file failed to parse; `line` is 1-based.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Loaded content is structurally valid but semantically inconsistent.
    #[error("validation failed: {0}")]
    Validation(String),

    /// The endpoint refused a query batch that would exceed its budget.
    #[error("query budget exhausted ({remaining} samples remaining)")]
    BudgetExhausted { remaining: u64 },

    /// Network-level failure, distinct from any protocol error.
    #[error("transport failure: {0}")]
    Transport(String),

    /// An operation was called before its prerequisites were established.
    #[error("invalid state: {0}")]
    State(String),

    /// The requested metric is undefined on this input.
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    /// Input carries no usable signal (e.g. rank-0 feature matrix).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A binary or CSV artifact does not match the documented format.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

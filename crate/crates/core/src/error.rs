use thiserror::Error;

/// Errors surfaced by model loading, validation and the analysis algorithms.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input: bad matrix shapes, non-unitary bindings, broken
    /// measurement algebra, unknown names, syntax errors.
    #[error("validation: {0}")]
    Validation(String),

    /// An operation was called on data that violates its precondition
    /// (mixed state where a pure one is required, zero-trace input, ...).
    #[error("precondition: {0}")]
    Precondition(String),

    /// A state the algorithms guarantee unreachable was reached anyway,
    /// typically a symptom of tolerance starvation on ill-conditioned input.
    #[error("internal inconsistency: {0}")]
    Inconsistency(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub fn inconsistency(msg: impl Into<String>) -> Self {
        Error::Inconsistency(msg.into())
    }
}

use thiserror::Error;

/// Errors raised by the moment kernels, layers and inference sweep.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TagiError {
    /// Invalid layer table, shape chain or hyperparameter.
    #[error("configuration error: {0}")]
    Config(String),
    /// A caller violated an operation's precondition (lengths, emptiness, ranges).
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// Forward caches missing or consumed twice.
    #[error("sequencing error: {0}")]
    Sequencing(String),
    /// Malformed observations or inputs.
    #[error("data error: {0}")]
    Data(String),
    /// A moment became NaN or infinite.
    #[error("non-finite value: {0}")]
    NonFinite(String),
}

pub type Result<T, E = TagiError> = std::result::Result<T, E>;

impl TagiError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        TagiError::Config(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        TagiError::Precondition(msg.into())
    }
}

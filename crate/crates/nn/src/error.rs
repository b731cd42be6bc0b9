use thiserror::Error;

/// Errors raised by tensor operations, optimizers and checkpoint I/O.
#[derive(Debug, Error)]
pub enum NnError {
    #[error("{op}: shape mismatch, expected {expected}, got {got:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        got: Vec<usize>,
    },

    #[error("tensor value count {values} does not match shape {shape:?}")]
    ValueCount { shape: Vec<usize>, values: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("batch norm in train mode needs a batch of at least 2, got {0}")]
    BatchTooSmall(usize),

    #[error("{0}")]
    InvalidArgument(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;

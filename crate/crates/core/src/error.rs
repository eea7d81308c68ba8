use thiserror::Error;

/// Errors produced by tensor construction, decomposition and file handling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index:?} out of range for shape {shape:?}")]
    IndexOutOfRange { index: Vec<usize>, shape: Vec<usize> },

    #[error("expected {expected} indices, got {got}")]
    ArityMismatch { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid permutation: {0}")]
    BadPermutation(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("tensor orders differ ({left} vs {right}); pad with singleton modes explicitly")]
    OrderMismatch { left: usize, right: usize },

    #[error("input contains non-finite values")]
    NonFiniteInput,

    #[error("tensor order {0} is too low; at least 2 modes are required")]
    OrderTooLow(usize),

    #[error("size overflow: {0}")]
    SizeOverflow(String),

    #[error("bad shift pattern: {0}")]
    BadShiftPattern(String),

    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

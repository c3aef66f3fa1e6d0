use thiserror::Error;

#[derive(Debug, Error)]
pub enum MnlError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("item index {index} out of range for {n_items} items")]
    IndexOutOfRange { index: usize, n_items: usize },

    #[error("invalid assortment: {0}")]
    InvalidAssortment(String),

    #[error("invalid input: {0}")]
    Domain(String),

    #[error("matrix is not positive definite")]
    Singular,

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },

    #[error("problem too large for exhaustive search: {0} items (max 20)")]
    TooLarge(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MnlError>;

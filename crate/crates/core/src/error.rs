use thiserror::Error;

/// Errors raised by the simulator library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid qubit selection: {0}")]
    InvalidQubits(String),

    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("trajectory weight underflow at slot {slot} (weight {weight:e})")]
    WeightUnderflow { slot: usize, weight: f64 },

    #[error("dense Choi limit exceeded: {qubits} qubits > {limit}")]
    ChoiTooLarge { qubits: usize, limit: usize },

    #[error("dimension cap exceeded: {qubits} qubits > {limit}")]
    DimensionCap { qubits: usize, limit: usize },

    #[error("leg layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("time indices out of order: need 0 <= i < j <= {k}, got i={i}, j={j}")]
    TimeOrder { i: usize, j: usize, k: usize },

    #[error("malformed Choi record: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

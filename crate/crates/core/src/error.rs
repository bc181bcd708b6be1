use thiserror::Error;

/// Errors raised by the checkers and the linear-algebra kernel.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square: {0}x{1}")]
    NotSquare(usize, usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix has non-finite entries")]
    NonFinite,

    #[error("matrix is not Hermitian (asymmetry {0:.3e})")]
    NotHermitian(f64),

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:.3e}, threshold {threshold:.3e})")]
    NotPsd { min_eig: f64, threshold: f64 },

    #[error("matrix is not positive definite (min eigenvalue {0:.3e})")]
    NotPositiveDefinite(f64),

    #[error("kernel inclusion precondition violated: {0}")]
    KernelPrecondition(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Schur-complement conditions disagree: block={block}, via_y={via_y}, via_x={via_x}")]
    SchurDisagreement {
        block: bool,
        via_y: bool,
        via_x: bool,
    },

    #[error("witness failed re-verification: {0}")]
    WitnessRejected(String),

    #[error("malformed map file: {0}")]
    MalformedMap(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

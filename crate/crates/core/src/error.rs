use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid weight: {0}")]
    InvalidWeight(String),

    #[error("invalid exponent: {0}")]
    InvalidExponent(String),

    /// The space is not p-convex with constant one, so its p-th power is not normable.
    #[error("space exponent {space} is below the requested power {p}; the p-th power is not a Banach function space")]
    NotPConvex { space: String, p: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    /// A weight could not be certified; `infeasible` means the constant is too small.
    #[error("weight synthesis failed at step {step}: {reason}")]
    Synthesis {
        step: usize,
        infeasible: bool,
        reason: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

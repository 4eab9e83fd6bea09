use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("{what} = {value} is outside the domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: String,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("row {row} sums to {sum}; cannot normalize")]
    ZeroRowSum { row: usize, sum: f64 },

    #[error("{method} did not converge after {iterations} iterations (last residual {residual:e})")]
    NonConvergence {
        method: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("mixing horizon of {cap} steps exceeded (distance {distance:e})")]
    HorizonExceeded { cap: usize, distance: f64 },

    #[error("bin index {index} out of range for {n_bins} bins")]
    InvalidBin { index: usize, n_bins: usize },

    #[error("matrix is not row-normalized")]
    NotNormalized,

    #[error("simulation produced no detections")]
    EmptyBatch,

    #[error("simulation horizon of {cycles} cycles exceeds the supported maximum {max}")]
    HorizonTooLong { cycles: u64, max: u64 },
}

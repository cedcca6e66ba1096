use thiserror::Error;

/// Errors surfaced by the estimators, the tests and the I/O layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid neighbor depth k={k} for n={n} points (need 1 <= k <= n-1)")]
    InvalidK { k: usize, n: usize },

    #[error("duplicate points at indices {indices:?} (nearest-neighbor distance is zero; consider --jitter)")]
    DuplicatePoints { indices: Vec<usize> },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eig:e} <= tolerance {tol:e})")]
    NotPositiveDefinite { min_eig: f64, tol: f64 },

    #[error("weight constraints infeasible for k={k}, d={d} (residual {residual:e})")]
    WeightInfeasible { k: usize, d: usize, residual: f64 },

    #[error("observation {row} coincides with the center; its direction is undefined")]
    DegenerateDirection { row: usize },

    #[error("{path}: line {line}, column {column}: {message}")]
    Csv {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

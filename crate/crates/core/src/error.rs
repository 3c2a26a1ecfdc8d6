use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric: |a[{i}][{j}] - a[{j}][{i}]| = {gap:e}")]
    NotSymmetric { i: usize, j: usize, gap: f64 },

    #[error("matrix is not positive semidefinite: smallest eigenvalue {min_eig:e}")]
    NotPsd { min_eig: f64 },

    #[error("Jacobi eigen-decomposition did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    EigenNoConvergence { sweeps: usize, off_norm: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("out of range: {0}")]
    Range(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("unsupported specification: {0}")]
    Unsupported(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error("grid error: {0}")]
    Grid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{solver} diverged at iteration {iteration}")]
    Divergence {
        solver: &'static str,
        iteration: usize,
    },

    #[error("matrix is singular or not positive definite ({0})")]
    Singular(&'static str),

    #[error("no convergence after {sweeps} sweeps (KKT residual {kkt_residual:e})")]
    NonConvergence { sweeps: usize, kkt_residual: f64 },

    #[error("malformed matrix header: {0}")]
    MalformedHeader(String),

    #[error("truncated matrix payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("matrix file declares an empty {rows}x{cols} matrix")]
    EmptyMatrix { rows: usize, cols: usize },

    #[error("matrix file contains a non-finite entry at flat index {0}")]
    NonFiniteEntry(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

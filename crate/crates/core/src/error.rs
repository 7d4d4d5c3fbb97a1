use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("{op} requires a square matrix, got {rows}x{cols}")]
    NotSquare {
        op: &'static str,
        rows: usize,
        cols: usize,
    },

    /// A fixed-point series did not converge. `spectral_radius` is the
    /// estimate that drove the precheck (or the iteration), `residual` is the
    /// final max-abs residual (infinite when the precheck rejected the input).
    #[error("non-convergent fixed point: residual {residual:e} after {iterations} iterations (spectral radius estimate {spectral_radius})")]
    NonConvergent {
        residual: f64,
        iterations: usize,
        spectral_radius: f64,
    },

    #[error("matrix is not normal: |AA^T - A^TA|_max = {deviation:e} exceeds {tolerance:e}")]
    NotNormal { deviation: f64, tolerance: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("singular covariance: {0}")]
    SingularCovariance(&'static str),

    #[error("state overflow at step {step}: |x| = {magnitude:e}")]
    Overflow { step: usize, magnitude: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

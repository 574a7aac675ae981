use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("model validation failed: {0}")]
    Validation(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("eigen-solver failure: {0}")]
    EigenSolver(String),

    #[error(
        "damping is not proportional: largest modal off-diagonal {max_offdiag:.3e} exceeds {tolerance:.3e}"
    )]
    NonProportionalDamping { max_offdiag: f64, tolerance: f64 },

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("resonance: mode {mode} eigenvalue lies on harmonic {harmonic} of the forcing frequency")]
    Resonance { mode: usize, harmonic: i64 },

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("solution not converged: {0}")]
    NotConverged(String),

    #[error(
        "time integration unsettled after {periods} periods (period-to-period difference {residual:.3e}, observed decay factor {decay:.3})"
    )]
    Unsettled {
        periods: usize,
        residual: f64,
        decay: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

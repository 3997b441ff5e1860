use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid needs at least 4 subdivisions per side, got {0}")]
    GridTooSmall(usize),

    #[error("{what}: expected length {expected}, got {got}")]
    SizeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("loop index {index} out of range for a loop of {len} nodes")]
    LoopIndex { index: usize, len: usize },

    #[error("invalid parameter `{key}`: {reason}")]
    InvalidParameter { key: &'static str, reason: String },

    #[error(
        "linear solver did not converge after {iterations} iterations \
         (relative residual {residual:.3e}, target {tol:.3e})"
    )]
    NotConverged {
        iterations: usize,
        residual: f64,
        tol: f64,
        best: Vec<f64>,
    },

    #[error("linear solver broke down: {0}")]
    Breakdown(String),

    #[error("state became non-finite at step {step}")]
    NonFinite { step: u64 },

    #[error("fit needs at least two points, got {0}")]
    TooFewPoints(usize),

    #[error("fit input must be strictly positive, got ({tau}, {error})")]
    NonPositive { tau: f64, error: f64 },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("override `{arg}`: {message}")]
    Override { arg: String, message: String },

    #[error("{0}")]
    InvalidCase(String),

    #[error("nothing to write: {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

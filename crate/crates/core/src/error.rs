use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("moment vector is not realizable: {0}")]
    NotRealizable(String),

    #[error("basis kind mismatch: expected {expected}, got {got}")]
    KindMismatch { expected: String, got: String },

    #[error("dual solve did not converge after {iterations} iterations (gradient norm {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("multipliers leave the representable exponential range (max exponent {0:e})")]
    BoundedDomain(f64),

    #[error("normalized moment {0:?} lies outside its quadrant")]
    OutOfQuadrant([f64; 2]),

    #[error("closure failed in cell ({ix}, {iy}): {source}")]
    Cell {
        ix: usize,
        iy: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

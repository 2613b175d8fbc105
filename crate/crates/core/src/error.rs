use thiserror::Error;

/// Errors produced by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid field specification: {0}")]
    InvalidSpec(String),

    #[error("coefficient {value} on element {element} outside [{lower}, {upper}]")]
    BoundViolation {
        element: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error(
        "incompatible right-hand side: sum {sum:.3e} exceeds tolerance relative to {scale:.3e}"
    )]
    Compatibility { sum: f64, scale: f64 },

    #[error("iteration did not converge after {iterations} steps (last relative residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("problem too large for dense oracle: {dof} > {limit}")]
    Size { dof: usize, limit: usize },

    #[error("incompatible operands: {0}")]
    Incompatible(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("interior solve failed for boundary column {column}: {source}")]
    ColumnSolve {
        column: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}

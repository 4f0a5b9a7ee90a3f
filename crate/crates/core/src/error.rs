use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The nonlinear map could not be evaluated (e.g. a singular inner solve).
    #[error("evaluation failed: {0}")]
    Evaluation(String),

    #[error("Lanczos start vector is zero")]
    InvalidStart,

    #[error("singular system: {0}")]
    Singular(String),

    /// Newton's method on the secular equation ran out of iterations.
    #[error("secular equation not solved after {iterations} Newton steps (lambda = {lambda:e}, psi = {psi:e})")]
    NonConvergence {
        iterations: usize,
        lambda: f64,
        psi: f64,
    },

    #[error("dense operation refused: dimension {n} exceeds the dense cap {cap}")]
    DenseCapExceeded { n: usize, cap: usize },

    #[error("undefined metric: {0}")]
    UndefinedMetric(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        })
    }
}

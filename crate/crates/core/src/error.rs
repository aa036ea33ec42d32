use thiserror::Error;

/// Errors raised by the sensitivity-testing primitives.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("value outside domain: {0}")]
    Domain(String),

    #[error("invalid history: {0}")]
    InvalidHistory(String),

    #[error("maximum likelihood estimate does not exist: {0}")]
    Separation(String),

    #[error("no convergence after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NonConvergence {
        iterations: usize,
        gradient_norm: f64,
        alpha: f64,
        beta: f64,
    },

    #[error("degenerate slope estimate")]
    DegenerateSlope,

    #[error("coupling domination violated at index {index}: B={b} > A={a}")]
    CouplingViolation {
        /// 1-based index of the first violating step.
        index: usize,
        a: u64,
        b: u64,
        /// Outcome prefix up to and including the violating step.
        prefix: Vec<i8>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

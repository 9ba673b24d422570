use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature construction failed: {0}")]
    Quadrature(String),

    #[error("SOE construction failed: {0}")]
    SoeConstruction(String),

    #[error("covariance is not positive semidefinite: pivot {pivot} has residual variance {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("non-finite value at step {step}: {what}")]
    Overflow { step: usize, what: &'static str },

    #[error("training diverged at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use num_complex::Complex64;
use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The operation is evaluated exactly at a singular point.
    #[error("singularity: {0}")]
    Singularity(String),

    /// An iteration did not converge; carries the last iterate and its residual.
    #[error("{what} did not converge (last iterate {last}, residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        last: Complex64,
        residual: f64,
    },

    /// Any other numerical failure (refinement, branch continuity, NaN).
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    /// `true` for errors caused by bad input rather than by the numerics.
    pub fn is_invalid_argument(&self) -> bool {
        matches!(self, Error::InvalidArgument(_) | Error::Singularity(_))
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

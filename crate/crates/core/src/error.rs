use thiserror::Error;

/// Errors raised by distribution, convolution and pipeline operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: String,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("lattice grids differ: step {left} vs {right}")]
    GridMismatch { left: f64, right: f64 },

    #[error("divergent: {0}")]
    Divergent(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, value: f64, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            value,
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad inputs rather than a failing computation.
    pub fn is_precondition(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. }
                | Error::Precondition(_)
                | Error::Unsupported(_)
                | Error::GridMismatch { .. }
                | Error::Divergent(_)
                | Error::Parse(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors raised by the bound toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown constellation `{0}`")]
    UnknownConstellation(String),

    #[error("invalid constellation: {0}")]
    InvalidConstellation(String),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("rho = {rho} is within {eps:e} of 1: the paired prior is singular, use the reduced common-phase model")]
    DegenerateRho { rho: f64, eps: f64 },

    #[error("reduced common-phase model requires rho = 1, got {0}")]
    NotFullySynchronized(f64),

    #[error("block length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("Bayesian information matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("non-finite Hessian sample at delta grid point {grid_index} (delta = {delta})")]
    NonFiniteHessian { grid_index: usize, delta: f64 },

    #[error("data-aided operation requires known symbols")]
    MissingSymbols,

    #[error("config: {0}")]
    Config(String),

    #[error("csv schema: missing column `{0}`")]
    MissingColumn(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }

    /// True for errors caused by user-supplied configuration rather than
    /// numerical failure.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::UnknownConstellation(_)
                | Error::InvalidConstellation(_)
                | Error::InvalidParameter { .. }
                | Error::DegenerateRho { .. }
                | Error::NotFullySynchronized(_)
                | Error::Config(_)
                | Error::MissingColumn(_)
                | Error::MissingSymbols
                | Error::LengthMismatch { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

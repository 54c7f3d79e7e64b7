use thiserror::Error;

/// Errors raised by the estimation and testing routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite objective encountered during fitting")]
    NonFinite,

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("fit diverged (possible separation): {0}")]
    Divergence(String),

    #[error(
        "statistic {0} is negative beyond numerical tolerance; a fit did not reach its maximum"
    )]
    NegativeStatistic(f64),

    #[error("{path}: {message}")]
    Load { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Contract(msg.into()))
}

use thiserror::Error;

/// Errors raised by the statistical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument fell outside its admissible range.
    #[error("out of range: {0}")]
    Range(String),
    /// The requested quantity does not exist for this input (e.g. an undefined statistic).
    #[error("domain error: {0}")]
    Domain(String),
    /// A numerical procedure failed or produced an unacceptable residual.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn range<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Range(msg.into()))
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

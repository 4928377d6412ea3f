use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A process or experiment description violates a structural condition.
    #[error("invalid configuration: {0}")]
    Config(String),
    /// An argument is outside the operation's domain.
    #[error("invalid argument: {0}")]
    Argument(String),
    /// A closed form was requested for a case that has none.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// The lag-window variance estimate is not positive.
    #[error("non-positive long-run variance estimate ({0})")]
    NonPositiveVariance(f64),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Arguments outside an operation's domain (width mismatch, bad parameter, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Request would exceed the configured memory budget.
    #[error("resource error: {0}")]
    Resource(String),

    /// An iterative method failed to converge. `best` carries the best
    /// estimate reached before giving up.
    #[error("numeric error: {message} (best estimate {best}, residual {residual:e})")]
    Numeric { message: String, best: f64, residual: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SddError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("time {s} is outside the stored window [{lo}, {hi}]")]
    OutOfWindow { s: f64, lo: f64, hi: f64 },

    #[error("solution diverged (non-finite state) at t = {t}")]
    Divergence { t: f64 },

    #[error("fixed-point iteration did not converge after {iterations} iterations (last difference {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("i/o: {0}")]
    Io(String),
}

impl SddError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        SddError::InvalidArgument(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        SddError::Config { key: key.into(), message: message.into() }
    }
}

impl From<std::io::Error> for SddError {
    fn from(e: std::io::Error) -> Self {
        SddError::Io(e.to_string())
    }
}

pub type Result<T, E = SddError> = std::result::Result<T, E>;

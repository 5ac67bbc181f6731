use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid robot model: {0}")]
    InvalidModel(String),

    #[error("{0} is not symmetric positive definite")]
    NotPositiveDefinite(&'static str),

    /// Raised when `J M⁻¹ Jᵀ` is numerically rank deficient.
    #[error("task Jacobian is rank deficient (smallest singular value {sigma_min:e})")]
    Singular { sigma_min: f64 },

    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error("integration fault at t = {t} s: {msg}")]
    IntegrationFault { t: f64, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(what: &'static str, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            what,
            expected,
            actual,
        }
    }

    pub(crate) fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

use crate::linalg::MatrixMode;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A Cholesky pivot dropped below the relative threshold.
    #[error("gram matrix is numerically singular (pivot {pivot:e} below {threshold:e})")]
    SingularGram { pivot: f64, threshold: f64 },

    #[error("operation requires a {expected:?} estimator, got {found:?}")]
    ModeMismatch {
        expected: MatrixMode,
        found: MatrixMode,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid value for `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("unknown params file version `{0}`")]
    UnknownVersion(String),

    #[error("malformed file: {0}")]
    MalformedFile(String),

    #[error("`{field}` has length {found}, expected {expected}")]
    LengthMismatch {
        field: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Numerical failures (as opposed to bad input) map to their own CLI exit code.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularGram { .. } | Error::NonFinite(_) | Error::ModeMismatch { .. }
        )
    }
}

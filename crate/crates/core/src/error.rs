use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("coupling coverage error: site {index} is outside the sampled range [{k_min}, {k_max}]")]
    Coverage { index: i64, k_min: i64, k_max: i64 },

    #[error("energy {energy} exceeds the discretization validity ceiling {ceiling}")]
    AboveCeiling { energy: f64, ceiling: f64 },

    #[error("range error: {0}")]
    Range(String),

    #[error("numerical failure for eigenvalue index {index}: {reason}")]
    Numerical { index: usize, reason: String },

    #[error("degenerate decay fit: {0}")]
    DegenerateFit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Validation-type failures (bad input) as opposed to numerical ones.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Coverage { .. } | Error::AboveCeiling { .. } | Error::Range(_)
        )
    }
}

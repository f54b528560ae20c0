use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value encountered at round {round}: {what}")]
    NonFinite { round: usize, what: String },

    #[error("input is not unit norm (norm = {norm})")]
    NonUnitInput { norm: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("algorithm mismatch: state runs {actual}, called {expected}")]
    AlgorithmMismatch {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("loss oracle failed: {0}")]
    Oracle(String),

    #[error("malformed container: {0}")]
    Container(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// True for failures caused by numerical blow-up rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite { .. })
    }

    /// Round index carried by a numerical abort, if any.
    pub fn round(&self) -> Option<usize> {
        match self {
            Error::NonFinite { round, .. } => Some(*round),
            _ => None,
        }
    }
}

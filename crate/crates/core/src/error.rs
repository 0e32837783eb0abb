use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse failure classes, used by front-ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(
        "sinkhorn underflow: {which} has a zero entry at iteration {iteration}; \
         lower lambda3 or use the log-domain solver"
    )]
    SinkhornUnderflow { which: &'static str, iteration: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training fault at epoch {epoch}, batch {batch}: {reason}")]
    Training {
        epoch: usize,
        batch: usize,
        reason: String,
    },

    #[error("{path}: row {row}, column '{column}': {reason}")]
    Parse {
        path: String,
        row: usize,
        column: String,
        reason: String,
    },

    #[error("linear fit failed: {0}")]
    Fit(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(context: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::Shape {
            context,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidInput(_) => ErrorClass::Usage,
            Error::SinkhornUnderflow { .. } | Error::NonFinite(_) | Error::Training { .. } => {
                ErrorClass::Numerical
            }
            Error::Fit(_) => ErrorClass::Numerical,
            Error::Shape { .. }
            | Error::Parse { .. }
            | Error::Checkpoint(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => ErrorClass::Data,
        }
    }
}

use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {found}")]
    ShapeMismatch {
        context: String,
        expected: String,
        found: String,
    },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("csv parse error at line {line}: {message}")]
    CsvParse { line: usize, message: String },

    #[error(
        "target missing rate {target} is outside the achievable range [{min:.4}, {max:.4}] \
         for the rectangular mechanism"
    )]
    UnreachableRate { target: f64, min: f64, max: f64 },

    #[error("feature `{name}` (column {index}) is never observed in the training split")]
    FeatureNeverObserved { index: usize, name: String },

    #[error("training diverged at epoch {epoch}: {context}")]
    Diverged { epoch: usize, context: String },

    #[error("no missing entries to score")]
    NoMissingEntries,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(context: impl Into<String>, expected: impl Into<String>, found: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            context: context.into(),
            expected: expected.into(),
            found: found.into(),
        }
    }

    pub(crate) fn non_finite(context: impl Into<String>) -> Self {
        Error::NonFinite {
            context: context.into(),
        }
    }
}

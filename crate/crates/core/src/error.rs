use std::path::PathBuf;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("unknown column `{0}`: not present in the CSV header")]
    UnknownColumn(String),

    #[error("row {row}, attribute `{attribute}`: cannot resolve value `{value}`")]
    UnresolvableValue {
        row: usize,
        attribute: String,
        value: String,
    },

    #[error("row {row}, attribute `{attribute}`: level {level} out of range (size {size})")]
    OutOfRange {
        row: usize,
        attribute: String,
        level: i64,
        size: usize,
    },

    #[error("invalid encoding: {0}")]
    InvalidEncoding(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("privacy budget exceeded while charging `{label}`: spent {spent} + {rho} > total {total}")]
    BudgetExceeded {
        label: String,
        spent: f64,
        rho: f64,
        total: f64,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("missing marginal for attribute pair ({0}, {1})")]
    MissingPair(usize, usize),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("data bound violated: {0}")]
    BoundViolation(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wrap this error with a description of where it happened.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Hyperparameters or constraint configuration rejected before any compute.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A solution or initial point violates one of the model constraints.
    #[error("constraint violated ({constraint}): {detail}")]
    ConstraintViolation {
        constraint: &'static str,
        detail: String,
    },

    #[error("invalid data: {0}")]
    Data(String),

    /// A record or dataset does not carry a variable the model expects.
    #[error("schema mismatch: variable `{variable}` {reason}")]
    Schema { variable: String, reason: String },

    #[error("metric `{metric}` is undefined: {reason}")]
    UndefinedMetric {
        metric: &'static str,
        reason: String,
    },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unsupported document version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn violation(constraint: &'static str, detail: impl Into<String>) -> Self {
        Error::ConstraintViolation {
            constraint,
            detail: detail.into(),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

use thiserror::Error;

/// Broad failure class, used by the CLI to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Parse,
    Capacity,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid interval: lower bound {lo} exceeds upper bound {hi}")]
    InvalidInterval { lo: String, hi: String },

    #[error("cannot parse number {input:?}: {reason}")]
    Number { input: String, reason: String },

    #[error("value {value} is outside the range of scale {scale:?}")]
    OutOfRange { scale: String, value: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("unknown {what} {id:?}")]
    Unknown { what: &'static str, id: String },

    #[error("{0}")]
    Capacity(String),

    #[error("parse error at line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidInterval { .. }
            | Error::OutOfRange { .. }
            | Error::Validation(_)
            | Error::Unknown { .. } => ErrorKind::Validation,
            Error::Capacity(_) => ErrorKind::Capacity,
            Error::Number { .. } | Error::Syntax { .. } | Error::Io { .. } | Error::Json { .. } => {
                ErrorKind::Parse
            }
        }
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn unknown(what: &'static str, id: impl Into<String>) -> Self {
        Error::Unknown { what, id: id.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

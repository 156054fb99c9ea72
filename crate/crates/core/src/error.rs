use thiserror::Error;

/// Errors produced by the library.
///
/// The CLI maps these onto stable exit codes: configuration, schema, parse
/// and domain errors are usage problems (exit 2); degenerate columns and
/// solver failures are numeric problems (exit 3).
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain violation for {loss} loss: target {value}")]
    DomainViolation { loss: &'static str, value: f64 },

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("degenerate column {column}: {reason}")]
    DegenerateColumn { column: String, reason: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn degenerate(column: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::DegenerateColumn {
            column: column.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad input (config, schema, malformed data)
    /// rather than by numeric trouble while solving.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::DomainViolation { .. }
                | Error::NonFinite(_)
                | Error::Dimension(_)
                | Error::Config(_)
                | Error::Schema(_)
                | Error::Parse { .. }
                | Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

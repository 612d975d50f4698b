//! Error type shared by every module of the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("validation: {0}")]
    Validation(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },

    #[error("data integrity: {0}")]
    DataIntegrity(String),

    #[error("stage ordering: {0}")]
    StageOrdering(String),

    #[error("parse error at {path}:{line}: {detail}")]
    Parse {
        path: String,
        line: usize,
        detail: String,
    },

    #[error("format: {0}")]
    Format(String),

    #[error("undefined AUC: {0}")]
    UndefinedAuc(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-parsable category, used by the CLI's one-line failures.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::Validation(_) => "validation",
            Error::NonFinite(_) => "non-finite",
            Error::Divergence { .. } => "divergence",
            Error::DataIntegrity(_) => "data-integrity",
            Error::StageOrdering(_) => "ordering",
            Error::Parse { .. } => "parse",
            Error::Format(_) => "format",
            Error::UndefinedAuc(_) => "undefined-auc",
            Error::Usage(_) => "usage",
            Error::Io(_) => "io",
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid hyperparameter or flag combination.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed or inconsistent input data.
    #[error("data error: {0}")]
    Data(String),

    #[error("document {index} has no tokens left after tokenization")]
    EmptyDocument { index: usize },

    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    Shape {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("non-finite value in {context} at row {row}")]
    NonFinite { context: &'static str, row: usize },

    #[error("node {node} has a zero-norm representation")]
    ZeroNorm { node: usize },

    #[error("numeric failure at epoch {epoch}: {what}")]
    Numeric { epoch: usize, what: String },

    #[error("forward trace is stale (trace version {trace}, parameter version {params})")]
    StaleTrace { trace: u64, params: u64 },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(context: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        Error::Shape {
            context,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    /// Process exit code for the CLI: 1 config, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Numeric { .. } | Error::ZeroNorm { .. } => 3,
            Error::Data(_)
            | Error::EmptyDocument { .. }
            | Error::NonFinite { .. }
            | Error::Shape { .. }
            | Error::StaleTrace { .. }
            | Error::Io { .. } => 2,
        }
    }
}

use std::path::PathBuf;

/// Errors produced by the solver, the preconditioner rules, the oracles and
/// the experiment harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid preconditioner: {0}")]
    InvalidPreconditioner(String),

    #[error("numeric overflow: {0}")]
    NumericOverflow(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_mismatch(what: &str, expected: usize, actual: usize) -> Error {
    Error::InvalidInput(format!(
        "{what}: dimension mismatch (expected {expected}, got {actual})"
    ))
}

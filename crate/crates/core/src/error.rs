use thiserror::Error;

/// Errors produced by dataset construction, model fitting and the
/// replication harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("column not found: {0}")]
    MissingColumn(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("singular linear system: {msg} (condition number {cond:.3e})")]
    Singular { msg: String, cond: f64 },

    #[error("degenerate overlap: {0}")]
    DegenerateOverlap(String),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

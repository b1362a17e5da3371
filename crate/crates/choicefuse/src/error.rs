use thiserror::Error;

/// Errors surfaced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Dimension mismatch in linear algebra, naming the offending place.
    #[error("shape error: {0}")]
    Shape(String),

    /// A numeric argument outside its valid domain (e.g. temperature <= 0).
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid caller-supplied data (non-finite inputs, malformed one-hot).
    #[error("input error: {0}")]
    Input(String),

    /// CSV ingestion failure, pointing at the 1-based data row.
    #[error("ingestion error at row {row}: {message}")]
    Ingest { row: usize, message: String },

    /// Invalid configuration (ties, model kinds, search spaces, CLI config).
    #[error("configuration error: {0}")]
    Config(String),

    /// Training aborted on a non-finite loss.
    #[error("training failed at iteration {iteration}: non-finite {component}")]
    Training { iteration: usize, component: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

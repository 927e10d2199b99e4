use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("index {index} out of range for categorical feature `{feature}` (cardinality {cardinality})")]
    Index {
        feature: String,
        index: usize,
        cardinality: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("empty input sequence")]
    EmptySequence,

    #[error("invalid config at `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("training diverged on client {client} in epoch {epoch}")]
    Divergence { client: u32, epoch: usize },

    #[error("protocol error at `{path}`: {reason}")]
    Protocol { path: String, reason: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

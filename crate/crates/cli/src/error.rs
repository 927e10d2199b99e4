use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes. Stable across releases.
pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const MISSING_INPUT: i32 = 3;
    pub const DIVERGENCE: i32 = 4;
    pub const HASH_MISMATCH: i32 = 5;
    pub const INCOMPATIBLE_HORIZONS: i32 = 6;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid config at `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("missing input {path}: {what}")]
    MissingInput { path: PathBuf, what: String },

    #[error("training diverged on client {client} in epoch {epoch}")]
    Divergence { client: u32, epoch: usize },

    #[error("config hash mismatch for {artifact}: expected {expected}, found {found}")]
    HashMismatch {
        artifact: PathBuf,
        expected: String,
        found: String,
    },

    #[error("incompatible horizons: {0}")]
    IncompatibleHorizons(String),

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Core(#[from] fedstock_core::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use fedstock_core::Error as E;
        match self {
            CliError::Io { .. } | CliError::Json { .. } | CliError::Csv(_) => exit::IO,
            CliError::Config { .. } => exit::CONFIG,
            CliError::MissingInput { .. } => exit::MISSING_INPUT,
            CliError::Divergence { .. } => exit::DIVERGENCE,
            CliError::HashMismatch { .. } => exit::HASH_MISMATCH,
            CliError::IncompatibleHorizons(_) => exit::INCOMPATIBLE_HORIZONS,
            CliError::Core(e) => match e {
                E::Config { .. } => exit::CONFIG,
                E::Divergence { .. } => exit::DIVERGENCE,
                _ => exit::IO,
            },
        }
    }

    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

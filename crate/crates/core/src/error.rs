use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the search, estimation, and data layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid block choice: {0}")]
    InvalidBlock(String),

    #[error("stage {stage} expects {expected} blocks, got {got}")]
    StageSize {
        stage: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown device `{0}`")]
    UnknownDevice(String),

    #[error("duplicate device `{0}` in registry")]
    DuplicateDevice(String),

    #[error("samples span multiple devices (`{0}` and `{1}`)")]
    MixedDevices(String, String),

    #[error("device `{device}` has {available} records, need more than {requested}")]
    InsufficientRecords {
        device: String,
        available: usize,
        requested: usize,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate record for arch `{arch_id}` on device `{device}` (line {line})")]
    DuplicateRecord {
        arch_id: String,
        device: String,
        line: usize,
    },

    #[error("unknown architecture id `{0}`")]
    UnknownArch(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad input data rather than bad arguments.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::Context { source, .. } => source.is_data_error(),
            Error::Config(_) => false,
            _ => true,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

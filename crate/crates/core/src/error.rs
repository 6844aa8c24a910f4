use thiserror::Error;

/// Errors produced by the flakelens pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("xml parse error at byte {offset}: {message}")]
    Xml { offset: u64, message: String },

    #[error("invalid record `{name}`: {message}")]
    InvalidRecord { name: String, message: String },

    #[error("{message} at line {line}")]
    Format { line: usize, message: String },

    #[error("unknown commit id {0}")]
    UnknownCommit(String),

    #[error("duplicate commit id {0}")]
    DuplicateCommit(String),

    #[error("version control error: {0}")]
    Vcs(String),

    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("degenerate model: {0}")]
    Degenerate(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("model metadata: {0}")]
    ModelMetadata(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

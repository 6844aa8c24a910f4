use std::fmt;
use std::path::{Path, PathBuf};

/// Failure of one CLI invocation, carrying its exit code.
#[derive(Debug)]
pub enum CliError {
    /// An input file is missing, unreadable or malformed.
    Input { path: PathBuf, message: String },
    /// Model and features disagree on columns.
    Schema(String),
    Other(String),
}

impl CliError {
    pub fn input(path: &Path, message: impl fmt::Display) -> Self {
        CliError::Input {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }

    /// Wraps a core error raised while reading `path`.
    pub fn reading(path: &Path, e: flakelens::Error) -> Self {
        match e {
            flakelens::Error::SchemaMismatch(m) => CliError::Schema(format!("{}: {m}", path.display())),
            other => CliError::input(path, other),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input { .. } => 2,
            CliError::Schema(_) => 3,
            CliError::Other(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input { path, message } => write!(f, "cannot read {}: {message}", path.display()),
            CliError::Schema(m) => write!(f, "schema mismatch: {m}"),
            CliError::Other(m) => f.write_str(m),
        }
    }
}

impl From<flakelens::Error> for CliError {
    fn from(e: flakelens::Error) -> Self {
        match e {
            flakelens::Error::SchemaMismatch(m) => CliError::Schema(m),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

//! CLI-level error type: configuration diagnostics carry line numbers, I/O
//! failures carry the path, core errors pass through with their own context.

use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Configuration diagnostic; `line` is 1-based, 0 when the problem is
    /// not tied to a specific line (e.g. a missing required key).
    #[error("config{}: {message}", fmt_line(*line))]
    Config { line: usize, message: String },

    #[error(transparent)]
    Core(#[from] qcrv::QcrvError),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("snapshot {path}: {message}")]
    Snapshot { path: String, message: String },

    #[error("{0}")]
    State(String),
}

fn fmt_line(line: usize) -> String {
    if line == 0 {
        String::new()
    } else {
        format!(" line {line}")
    }
}

impl CliError {
    pub fn config(line: usize, message: impl Into<String>) -> Self {
        CliError::Config { line, message: message.into() }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

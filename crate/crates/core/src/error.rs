use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::blueprint::provider::ProviderError;

pub type Result<T, E = ForgeError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ForgeError {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("generation error after {attempts} attempts: {reason}")]
    Generation {
        attempts: usize,
        reason: String,
        raw: String,
    },

    #[error(transparent)]
    Provider(#[from] ProviderError),

    #[error("pipeline error: {0}")]
    Pipeline(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("asset `{asset}` could not be produced: {reason}")]
    Asset { asset: String, reason: String },

    #[error("decode error: {0}")]
    Decode(String),

    #[error("extraction error in {file}: {reason}")]
    Extraction { file: String, reason: String },

    #[error("repair error in {file}: {reason}")]
    Repair { file: String, reason: String },

    #[error("infrastructure error: {0}")]
    Infrastructure(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("missing cell for dimension {0}")]
    MissingCell(String),

    #[error("results reference unknown task ids: {}", .0.join(", "))]
    DanglingTasks(Vec<String>),

    #[error("file missing: {}", .0.display())]
    MissingFile(PathBuf),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ForgeError {
    /// Process exit code used by the CLI for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            ForgeError::Config(_) | ForgeError::Parse(_) => 2,
            ForgeError::Infrastructure(_) | ForgeError::Io(_) | ForgeError::MissingFile(_) => 3,
            ForgeError::Provider(p) if p.is_retryable() => 3,
            _ => 1,
        }
    }
}

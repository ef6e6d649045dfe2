use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] unmt_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("unknown stage {0:?}")]
    UnknownStage(String),
    #[error("stage {stage} needs {missing}, which has not been run")]
    MissingDependency { stage: String, missing: String },
    #[error("stage {stage} needs input {path}, which does not exist")]
    MissingInput { stage: String, path: PathBuf },
    #[error("workdir {0} is locked by another run")]
    Locked(PathBuf),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_owned(), source }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

use std::path::PathBuf;

use rsm_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("ingestion error at data row {row}: {message}")]
    Ingest { row: usize, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status; every error kind has its own code.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 3,
            CliError::Ingest { .. } => 4,
            CliError::Io { .. } => 5,
            CliError::Core(e) => match e {
                CoreError::Config(_) => 3,
                CoreError::Parse(_) => 6,
                CoreError::Io(_) => 5,
                CoreError::Csv(_) => 7,
                CoreError::Domain(_) => 8,
                CoreError::IllConditioned { .. } => 9,
                CoreError::FitFailed { .. } => 10,
                CoreError::SingularDesign { .. } => 11,
                CoreError::HillEvaluation(_) => 12,
                CoreError::UndefinedCorrelation(_) => 13,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

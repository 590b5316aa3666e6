use std::path::PathBuf;

use probit_ep::Error as CoreError;
use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_NON_PROGRESS: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        column: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    Artifact { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Invalid(String),

    #[error("{0}")]
    Core(#[from] CoreError),

    #[error("{0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. }
            | CliError::Artifact { .. }
            | CliError::Io { .. }
            | CliError::Invalid(_) => EXIT_INPUT,
            CliError::CheckFailed(_) => EXIT_CHECK_FAILED,
            CliError::Core(e) => match e.root() {
                CoreError::NonProgress { .. } => EXIT_NON_PROGRESS,
                CoreError::InvalidData(_)
                | CoreError::Config(_)
                | CoreError::DimensionMismatch { .. }
                | CoreError::UnknownScenario(_)
                | CoreError::NonFinite(..) => EXIT_INPUT,
                _ => EXIT_CHECK_FAILED,
            },
        }
    }

    /// Short tag printed before every error message, e.g. `error[input]`.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Parse { .. } => "parse",
            CliError::Artifact { .. } => "artifact",
            CliError::Io { .. } => "io",
            CliError::Invalid(_) => "input",
            CliError::CheckFailed(_) => "check",
            CliError::Core(e) => match e.root() {
                CoreError::NonProgress { .. } => "non-progress",
                CoreError::InvalidData(_) | CoreError::DimensionMismatch { .. } => "input",
                CoreError::Config(_) | CoreError::UnknownScenario(_) | CoreError::NonFinite(..) => {
                    "config"
                }
                _ => "numerical",
            },
        }
    }

    /// The message on one line, prefixed with its kind.
    pub fn render(&self) -> String {
        let mut text = self.to_string();
        text.retain(|c| c != '\n' && c != '\r');
        format!("error[{}]: {}", self.kind(), text)
    }
}

use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("malformed config: {0}")]
    Config(String),

    #[error("missing input {role}: {detail}")]
    MissingInput { role: String, detail: String },

    #[error("malformed input {}: {detail}", path.display())]
    BadInput { path: PathBuf, detail: String },

    #[error("unknown report type `{0}`")]
    UnknownReport(String),

    #[error("empty report: {0}")]
    EmptyReport(String),

    #[error(transparent)]
    Pipeline(#[from] andikit::Error),

    #[error("cannot write {}: {detail}", path.display())]
    Output { path: PathBuf, detail: String },
}

impl CliError {
    /// 2 is left to argument parsing (unknown command or flag).
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::UnknownReport(_) => 3,
            CliError::MissingInput { .. } => 4,
            CliError::BadInput { .. } => 5,
            CliError::Pipeline(_) | CliError::EmptyReport(_) => 6,
            CliError::Output { .. } => 7,
        }
    }

    /// Classifies a failure to open an input file.
    pub fn input(path: &Path, err: std::io::Error) -> Self {
        if err.kind() == std::io::ErrorKind::NotFound {
            CliError::MissingInput {
                role: path.display().to_string(),
                detail: err.to_string(),
            }
        } else {
            CliError::BadInput {
                path: path.to_path_buf(),
                detail: err.to_string(),
            }
        }
    }

    pub fn bad_input(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::BadInput {
            path: path.to_path_buf(),
            detail: err.to_string(),
        }
    }

    pub fn output(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Output {
            path: path.to_path_buf(),
            detail: err.to_string(),
        }
    }
}

use std::path::PathBuf;

use slowfast_core::Error as CoreError;
use thiserror::Error;

/// Process exit status for a failure class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Input = 2,
    Infeasible = 3,
    Parse = 4,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}", .0.join("\n"))]
    Frames(Vec<String>),

    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Core(CoreError::BudgetTooSmall { .. } | CoreError::InfeasibleMixture { .. }) => ExitCode::Infeasible,
            CliError::Core(CoreError::Parse { .. }) => ExitCode::Parse,
            _ => ExitCode::Input,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Data { path: PathBuf, line: u64, message: String },

    #[error("{0}")]
    Core(#[from] stshap::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 0 success, 2 config, 3 model bridge, 4 oracle cap, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        use stshap::Error as E;
        match self {
            CliError::Config(_) | CliError::Data { .. } => 2,
            CliError::Core(E::Model { .. }) => 3,
            CliError::Core(E::OracleCap { .. }) => 4,
            CliError::Core(
                E::InvalidBudget { .. } | E::FeatureCount(_) | E::InvalidLayer { .. } | E::InvalidInput(_) | E::Dimension(_),
            ) => 2,
            CliError::Core(_) | CliError::Io { .. } => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

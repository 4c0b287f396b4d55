use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),

    #[error("compute budget refused: {0}")]
    Budget(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("non-finite value in {file}")]
    NonFinite { file: String },

    #[error("check failed: {0}")]
    Check(String),

    #[error(transparent)]
    Core(#[from] ptsampler_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use ptsampler_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Budget(_) => 3,
            CliError::Core(E::DimensionCap { .. } | E::ChoiTooLarge { .. }) => 3,
            _ => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

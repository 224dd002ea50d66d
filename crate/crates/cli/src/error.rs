use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] tride_core::Error),
    #[error(transparent)]
    Autodiff(#[from] tride_autodiff::AdError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {msg}")]
    Config { path: PathBuf, msg: String },
    #[error("{0}")]
    Contract(String),
    #[error("loss became {value} at step {step}")]
    NonFinite { step: u64, value: f64 },
    #[error("gradient check failed: {0}")]
    GradCheck(String),
}

impl CliError {
    pub fn contract(msg: impl Into<String>) -> Self {
        CliError::Contract(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for gradient-check failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::GradCheck(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

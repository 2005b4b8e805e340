use std::path::Path;

use avgflow_train::TrainError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Train(#[from] TrainError),

    #[error(transparent)]
    Core(#[from] avgflow_core::Error),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error("{artifact} not found; run `{stage}` first")]
    MissingUpstream { stage: &'static str, artifact: String },

    #[error("invalid argument: {0}")]
    Usage(String),

    #[error("oracle check failed on {failed} of {total} instances")]
    OracleFailed { failed: usize, total: usize },
}

impl CliError {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Train(TrainError::Diverged { .. }) => "diverged",
            CliError::Train(TrainError::Checkpoint(_) | TrainError::ConfigMismatch { .. }) => "checkpoint",
            CliError::Train(TrainError::Dataset(_)) => "dataset",
            CliError::Train(TrainError::Invalid(_)) => "invalid",
            CliError::Train(TrainError::Io { .. }) | CliError::Io { .. } => "io",
            CliError::Train(_) | CliError::Core(_) => "numeric",
            CliError::Parse { .. } => "parse",
            CliError::MissingUpstream { .. } => "missing_upstream",
            CliError::Usage(_) => "usage",
            CliError::OracleFailed { .. } => "oracle_failed",
        }
    }

    /// Single-line JSON object written to stderr on failure.
    pub fn to_json(&self) -> String {
        let mut v = serde_json::json!({
            "error": self.kind(),
            "message": self.to_string(),
        });
        if let CliError::MissingUpstream { stage, artifact } = self {
            v["required_stage"] = (*stage).into();
            v["artifact"] = artifact.clone().into();
        }
        v.to_string()
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

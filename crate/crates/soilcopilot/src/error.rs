use serde_json::json;
use thiserror::Error;

use crate::config::ConfigError;
use crate::copilot::{AgentError, BackendError};
use crate::corpus::CorpusError;
use crate::formats::FormatError;
use crate::scene::SceneFileError;
use crate::store::StoreError;

/// Command failure, classified by exit code.
#[derive(Debug, Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Backend(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) => 2,
            AppError::Data(_) => 3,
            AppError::Backend(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            AppError::Usage(_) => "usage",
            AppError::Data(_) => "data",
            AppError::Backend(_) => "backend",
        }
    }

    /// Single-line JSON form written to stderr.
    pub fn to_json_line(&self) -> String {
        json!({ "error": { "kind": self.kind(), "exit_code": self.exit_code(), "message": self.to_string() } })
            .to_string()
    }
}

macro_rules! data_error {
    ($($t:ty),*) => {
        $( impl From<$t> for AppError {
            fn from(e: $t) -> Self {
                AppError::Data(e.to_string())
            }
        } )*
    };
}

data_error!(
    StoreError,
    FormatError,
    SceneFileError,
    CorpusError,
    soilcopilot_core::RasterError,
    soilcopilot_core::coherence::CoherenceError,
    soilcopilot_core::tillage::TillageError,
    soilcopilot_core::pipeline::PipelineError,
    std::io::Error
);

impl From<ConfigError> for AppError {
    fn from(e: ConfigError) -> Self {
        AppError::Usage(e.to_string())
    }
}

impl From<BackendError> for AppError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::Script { .. } => AppError::Data(e.to_string()),
            other => AppError::Backend(other.to_string()),
        }
    }
}

impl From<AgentError> for AppError {
    fn from(e: AgentError) -> Self {
        match e {
            AgentError::Backend(b) => b.into(),
            AgentError::ZeroCap => AppError::Usage(e.to_string()),
        }
    }
}

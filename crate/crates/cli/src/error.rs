use std::path::{Path, PathBuf};

use serde_json::{json, Value};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] poincare_core::Error),
    #[error("invalid config {file}: {message} (at {path})")]
    Json { file: PathBuf, path: String, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("needs about {required_bytes} bytes of memory but only {available_bytes} are available")]
    Memory { required_bytes: u64, available_bytes: u64 },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Core(
                poincare_core::Error::InvalidParameter(_) | poincare_core::Error::DimensionMismatch { .. },
            ) => "invalid_parameter",
            CliError::Core(_) => "computation",
            CliError::Json { .. } => "invalid_config",
            CliError::Usage(_) => "usage",
            CliError::Memory { .. } => "insufficient_memory",
            CliError::Io { .. } => "io",
        }
    }

    /// One-line JSON error record for stderr.
    pub fn record(&self) -> Value {
        let mut r = json!({ "error": self.kind(), "message": self.to_string() });
        match self {
            CliError::Json { file, path, .. } => {
                r["file"] = json!(file);
                r["path"] = json!(path);
            }
            CliError::Memory { required_bytes, available_bytes } => {
                r["required_bytes"] = json!(required_bytes);
                r["available_bytes"] = json!(available_bytes);
            }
            _ => {}
        }
        r
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

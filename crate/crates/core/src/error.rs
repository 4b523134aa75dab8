use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HdError>;

#[derive(Debug, Error)]
pub enum HdError {
    #[error("invalid dimension {dim} (minimum {min})")]
    InvalidDimension { dim: usize, min: usize },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("no training samples for class {0}")]
    MissingClass(&'static str),

    #[error("degenerate cohort: {0}")]
    DegenerateCohort(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("incompatible models: {0}")]
    IncompatibleModels(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("corrupt model file: {0}")]
    CorruptModel(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse failure category, used by the CLI for message prefixes and exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Parse,
    Data,
    Config,
    Internal,
}

impl ErrorCategory {
    pub fn label(self) -> &'static str {
        match self {
            ErrorCategory::Parse => "PARSE",
            ErrorCategory::Data => "DATA",
            ErrorCategory::Config => "CONFIG",
            ErrorCategory::Internal => "INTERNAL",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Internal => 1,
            ErrorCategory::Config => 3,
            ErrorCategory::Parse => 4,
            ErrorCategory::Data => 5,
        }
    }
}

impl HdError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            HdError::Parse { .. } | HdError::CorruptModel(_) | HdError::Json(_) => {
                ErrorCategory::Parse
            }
            HdError::Config(_) | HdError::InvalidDimension { .. } | HdError::InvalidArgument(_) => {
                ErrorCategory::Config
            }
            HdError::Io { .. }
            | HdError::DegenerateInput(_)
            | HdError::MissingClass(_)
            | HdError::DegenerateCohort(_)
            | HdError::InsufficientData(_)
            | HdError::IncompatibleModels(_)
            | HdError::DimensionMismatch { .. } => ErrorCategory::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HdError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        HdError::InvalidArgument(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        HdError::DegenerateInput(msg.into())
    }
}

pub(crate) fn check_dims(left: usize, right: usize) -> Result<()> {
    if left == right {
        Ok(())
    } else {
        Err(HdError::DimensionMismatch { left, right })
    }
}

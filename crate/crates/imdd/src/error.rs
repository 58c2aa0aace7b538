use std::path::{Path, PathBuf};

use crate::format::FormatError;

/// Failures of harness commands, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },
    #[error("training diverged at step {step}")]
    Divergence { step: usize },
    #[error(transparent)]
    Core(imdd_core::Error),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Core(_) => 2,
            HarnessError::Io { .. } | HarnessError::Format { .. } => 3,
            HarnessError::Divergence { .. } => 4,
        }
    }
}

impl From<imdd_core::Error> for HarnessError {
    fn from(e: imdd_core::Error) -> Self {
        match e {
            imdd_core::Error::Divergence { step } => HarnessError::Divergence { step },
            other => HarnessError::Core(other),
        }
    }
}

pub(crate) fn io_err(path: &Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn config_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

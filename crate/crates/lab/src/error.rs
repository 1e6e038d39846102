use std::path::PathBuf;

use thiserror::Error;

/// Failures of a lab run, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("config error: {0}")]
    Schema(String),
    #[error(transparent)]
    Core(#[from] dvrf_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("plot error: {0}")]
    Plot(String),
}

impl LabError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        LabError::Csv {
            path: path.into(),
            source,
        }
    }

    /// 2: schema or validation, 3: numeric divergence, 4: I/O, 1: anything else.
    pub fn exit_code(&self) -> i32 {
        use dvrf_core::Error as E;
        match self {
            LabError::Schema(_) | LabError::Plot(_) => 2,
            LabError::Core(E::Config(_) | E::Domain { .. } | E::Shape { .. } | E::UnknownPrompt { .. }) => 2,
            LabError::Core(E::Divergence { .. } | E::NonFinite(_) | E::Singular { .. }) => 3,
            LabError::Core(_) => 1,
            LabError::Io { .. } | LabError::Csv { .. } => 4,
        }
    }
}

pub type LabResult<T> = Result<T, LabError>;

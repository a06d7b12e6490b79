use std::path::PathBuf;

use rheo_core::optim::TrainTrace;

/// Every way a command can fail, grouped by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Numerical(#[from] rheo_core::Error),

    /// Optimizer failure; the trace up to the failure has been written.
    #[error("{message}")]
    Training { message: String, trace: TrainTrace },
}

impl CliError {
    /// 0 success, 1 numerical failure, 2 usage, configuration or input error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Format { .. } => 2,
            CliError::Io { .. } | CliError::Numerical(_) | CliError::Training { .. } => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        CliError::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// Domain errors in user-supplied settings are usage errors, not numerical ones.
pub(crate) fn config_error(e: rheo_core::Error) -> CliError {
    match e {
        rheo_core::Error::InvalidConfig(m) => CliError::Usage(m),
        rheo_core::Error::Domain { what, value } => {
            CliError::Usage(format!("{what} out of range: {value}"))
        }
        other => CliError::Numerical(other),
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

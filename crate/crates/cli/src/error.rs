use std::path::{Path, PathBuf};

/// Exit codes: 0 success, 1 configuration error, 2 I/O error.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] streamvb::Error),
    /// Some learners failed; the others completed.
    #[error("{failed} of {total} learners failed")]
    Learners { failed: usize, total: usize },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn malformed(path: &Path, message: impl Into<String>) -> Self {
        CliError::Malformed { path: path.to_path_buf(), message: message.into() }
    }

    /// Attaches the file name to errors raised while reading `path`.
    pub fn from_core_at(e: streamvb::Error, path: &Path) -> Self {
        match e {
            streamvb::Error::Io(source) => CliError::io(path, source),
            streamvb::Error::Csv(c) => CliError::malformed(path, c.to_string()),
            other => CliError::Core(other),
        }
    }

    pub fn exit_code(&self) -> u8 {
        use streamvb::Error as E;
        match self {
            CliError::Io { .. } | CliError::Malformed { .. } => 2,
            CliError::Core(E::Io(_) | E::Csv(_) | E::Parse { .. }) => 2,
            CliError::Config(_) | CliError::Core(_) | CliError::Learners { .. } => 1,
        }
    }
}

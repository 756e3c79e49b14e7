use thiserror::Error;

/// Command failures, split by the exit code they map to.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, unreadable or invalid configuration (exit 2).
    #[error("{0}")]
    Usage(String),
    /// Data or runtime failure (exit 1).
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<vocaltrack_core::Error> for CliError {
    fn from(e: vocaltrack_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub(crate) trait Context<T> {
    fn usage(self, what: &str) -> CliResult<T>;
    fn runtime(self, what: &str) -> CliResult<T>;
}

impl<T, E: std::fmt::Display> Context<T> for Result<T, E> {
    fn usage(self, what: &str) -> CliResult<T> {
        self.map_err(|e| CliError::Usage(format!("{what}: {e}")))
    }

    fn runtime(self, what: &str) -> CliResult<T> {
        self.map_err(|e| CliError::Runtime(format!("{what}: {e}")))
    }
}

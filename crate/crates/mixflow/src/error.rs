use std::path::Path;

/// Failure of a command, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad config file, flag or referenced path (exit code 1).
    #[error("config error: {0}")]
    Config(String),
    /// `--help` or `--version` was printed (exit code 0).
    #[error("help printed")]
    Help,
    /// Failure while running (exit code 2).
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Help => 0,
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {err}", path.display()))
    }
}

impl From<mixflow_core::Error> for CliError {
    fn from(err: mixflow_core::Error) -> Self {
        use mixflow_core::Error as E;
        match err {
            E::InvalidConfig(_) | E::InvalidNetwork(_) => CliError::Config(err.to_string()),
            _ => CliError::Runtime(err.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(err: csv::Error) -> Self {
        CliError::Runtime(err.to_string())
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

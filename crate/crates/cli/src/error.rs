use std::fmt;

/// Errors carrying the process exit code: 1 check failed, 2 I/O or file
/// format, 3 shape or configuration.
#[derive(Debug)]
pub enum CliError {
    /// A verification ran and did not pass.
    CheckFailed(String),
    /// Filesystem or serialization trouble.
    Io(String),
    /// Malformed file contents.
    Format(String),
    /// Invalid flags, shapes, or module configuration.
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::CheckFailed(_) => 1,
            CliError::Io(_) | CliError::Format(_) => 2,
            CliError::Config(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::CheckFailed(m) => write!(f, "check failed: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Format(m) => write!(f, "format error: {m}"),
            CliError::Config(m) => write!(f, "config error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Format(e.to_string())
    }
}

impl From<satk_core::Error> for CliError {
    fn from(e: satk_core::Error) -> Self {
        match e {
            satk_core::Error::NonFiniteLoss { .. } | satk_core::Error::NonFiniteSample { .. } => {
                CliError::CheckFailed(e.to_string())
            }
            other => CliError::Config(other.to_string()),
        }
    }
}

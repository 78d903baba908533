use std::fmt;

/// CLI failure classes, each with its own exit code: config errors exit 2,
/// I/O and pairing errors exit 3, internal invariant violations exit 4.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Internal(_) => 4,
        }
    }

    /// Wraps a library error arising while running a validated pipeline;
    /// file and format problems are I/O, everything else is internal.
    pub fn from_run(err: metr::Error) -> Self {
        match err {
            metr::Error::Io(e) => CliError::Io(e.to_string()),
            metr::Error::Format { offset, message } => {
                CliError::Io(format!("tensor format error at byte {offset}: {message}"))
            }
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Io(msg) => write!(f, "i/o error: {msg}"),
            CliError::Internal(msg) => write!(f, "internal error: {msg}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

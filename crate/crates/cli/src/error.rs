//! Harness errors with a stable exit-code contract:
//! 0 success, 1 validation error, 2 runtime failure.

use clib_core::CoreError;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or malformed input files; exit code 1.
    Validation(String),
    /// Failures while executing: IO, training, serialization; exit code 2.
    Runtime(String),
}

impl CliError {
    pub fn validation(msg: String) -> Self {
        CliError::Validation(msg)
    }

    pub fn runtime(msg: String) -> Self {
        CliError::Runtime(msg)
    }

    pub fn is_validation(&self) -> bool {
        matches!(self, CliError::Validation(_))
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    /// Core errors raised while checking inputs count as validation.
    pub fn from_core_validation(e: CoreError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(msg) => write!(f, "validation error: {msg}"),
            CliError::Runtime(msg) => write!(f, "runtime error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidSpec(_)
            | CoreError::UnsupportedVersion { .. }
            | CoreError::CsvParse { .. }
            | CoreError::LabelOutOfRange { .. } => CliError::Validation(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("io error: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(format!("json error: {e}"))
    }
}

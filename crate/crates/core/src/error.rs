//! Error type shared by all workbench modules.

use std::fmt;

pub type Result<T> = std::result::Result<T, CoreError>;

#[derive(Debug)]
pub enum CoreError {
    /// A tensor or batch dimension does not match what the operation expects.
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// A class label is outside `0..num_classes`.
    LabelOutOfRange { label: usize, num_classes: usize },
    /// A gradient entry was NaN or infinite.
    NonFiniteGradient,
    /// An operation that requires data received none.
    EmptyInput(&'static str),
    /// A loss-decrease history is shorter than the test requires.
    HistoryTooShort { len: usize, required: usize },
    /// Degrees of freedom must be at least 1.
    InvalidDegreesOfFreedom,
    /// A slot or sample index is outside the valid range.
    IndexOutOfRange { index: usize, len: usize },
    /// A configuration or split specification failed validation.
    InvalidSpec(String),
    /// A CSV row could not be parsed; `row` is 1-based including any header.
    CsvParse { row: usize, message: String },
    /// A serialized file declares a version this build does not understand.
    UnsupportedVersion { found: u32, supported: u32 },
    Io(std::io::Error),
    Json(serde_json::Error),
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::ShapeMismatch {
                what,
                expected,
                got,
            } => write!(f, "shape mismatch in {what}: expected {expected}, got {got}"),
            CoreError::LabelOutOfRange { label, num_classes } => {
                write!(f, "label {label} out of range for {num_classes} classes")
            }
            CoreError::NonFiniteGradient => write!(f, "gradient contains a non-finite value"),
            CoreError::EmptyInput(what) => write!(f, "{what} must not be empty"),
            CoreError::HistoryTooShort { len, required } => {
                write!(f, "history has {len} entries, need at least {required}")
            }
            CoreError::InvalidDegreesOfFreedom => write!(f, "degrees of freedom must be >= 1"),
            CoreError::IndexOutOfRange { index, len } => {
                write!(f, "index {index} out of range for length {len}")
            }
            CoreError::InvalidSpec(msg) => write!(f, "invalid specification: {msg}"),
            CoreError::CsvParse { row, message } => write!(f, "csv row {row}: {message}"),
            CoreError::UnsupportedVersion { found, supported } => {
                write!(f, "unsupported file version {found} (supported: {supported})")
            }
            CoreError::Io(e) => write!(f, "io error: {e}"),
            CoreError::Json(e) => write!(f, "json error: {e}"),
        }
    }
}

impl std::error::Error for CoreError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            CoreError::Io(e) => Some(e),
            CoreError::Json(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for CoreError {
    fn from(e: std::io::Error) -> Self {
        CoreError::Io(e)
    }
}

impl From<serde_json::Error> for CoreError {
    fn from(e: serde_json::Error) -> Self {
        CoreError::Json(e)
    }
}

use std::fmt;
use std::path::Path;

use tabxai_core::Error as CoreError;

/// A failure reported as one `error[CODE]: message` line. Exit status is 2
/// for I/O failures and 1 for everything else.
#[derive(Debug)]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, err: impl fmt::Display) -> Self {
        Self::new("E_IO", format!("{}: {err}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        if self.code == "E_IO" {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // keep it on one line
        let message = self.message.replace(['\n', '\r'], " ");
        write!(f, "error[{}]: {message}", self.code)
    }
}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        let code = match &err {
            CoreError::Io { .. } => "E_IO",
            CoreError::Csv(_)
            | CoreError::MissingHeader
            | CoreError::DuplicateColumn(_)
            | CoreError::EmptyColumnName(_)
            | CoreError::MissingLabelColumn(_)
            | CoreError::InvalidCell { .. }
            | CoreError::InvalidLabel { .. }
            | CoreError::RaggedRow { .. }
            | CoreError::EmptyDataset
            | CoreError::InvalidDataset(_)
            | CoreError::SingleClass => "E_DATA",
            CoreError::InvalidSplit(_) | CoreError::InvalidParams(_) => "E_CONFIG",
            CoreError::Json(_) => "E_MODEL",
            CoreError::SingularSystem | CoreError::TooManyFeatures { .. } => "E_COMPUTE",
            _ => "E_ARG",
        };
        Self::new(code, err.to_string())
    }
}

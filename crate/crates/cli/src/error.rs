use std::fmt;

use custody_service::api::ApiError;
use serde::Serialize;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const INTEGRITY: i32 = 3;
    pub const AUTH: i32 = 4;
    pub const NOT_FOUND: i32 = 5;
}

/// An error reported on stderr as one line of JSON.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CliError {
    #[serde(skip)]
    pub exit_code: i32,
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
}

impl CliError {
    pub fn new(exit_code: i32, code: &str, message: impl Into<String>) -> Self {
        CliError {
            exit_code,
            code: code.to_string(),
            message: message.into(),
            status: None,
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(exit::USAGE, "Usage", message)
    }

    pub fn io(context: &str, e: std::io::Error) -> Self {
        let code = if e.kind() == std::io::ErrorKind::NotFound {
            exit::NOT_FOUND
        } else {
            exit::FAILURE
        };
        Self::new(code, "Io", format!("{context}: {e}"))
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl From<ApiError> for CliError {
    fn from(e: ApiError) -> Self {
        let exit_code = match e.status {
            401 | 403 => exit::AUTH,
            404 => exit::NOT_FOUND,
            400 | 422 => exit::USAGE,
            _ => exit::FAILURE,
        };
        CliError {
            exit_code,
            code: e.code,
            message: e.message,
            status: (e.status != 0).then_some(e.status),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for CliError {}

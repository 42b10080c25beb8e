use std::fmt::Display;
use std::path::Path;

use serde_json::json;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Io,
    Degenerate,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> CliError {
        CliError { kind: ErrorKind::Validation, message: message.into() }
    }

    pub fn io(path: &Path, e: impl Display) -> CliError {
        CliError { kind: ErrorKind::Io, message: format!("{}: {e}", path.display()) }
    }

    pub fn degenerate(message: impl Into<String>) -> CliError {
        CliError { kind: ErrorKind::Degenerate, message: message.into() }
    }

    pub fn exit_code(&self) -> u8 {
        match self.kind {
            ErrorKind::Validation => 1,
            ErrorKind::Io => 2,
            ErrorKind::Degenerate => 3,
        }
    }

    /// One-line JSON written to stderr.
    pub fn to_json(&self) -> String {
        let code = match self.kind {
            ErrorKind::Validation => "validation",
            ErrorKind::Io => "io",
            ErrorKind::Degenerate => "degenerate_statistics",
        };
        json!({"error": code, "message": self.message}).to_string()
    }
}

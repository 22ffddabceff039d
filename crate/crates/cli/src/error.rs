use std::fmt;

use serde_json::json;

/// Failure of a command, mapped to the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration or arguments (exit 1).
    Config(Vec<String>),
    /// Malformed input file (exit 2).
    Format(String),
    Io(String),
    /// Simulation or analysis failure (exit 2).
    Runtime(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(vec![msg.into()])
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            _ => 2,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Format(_) => "format",
            CliError::Io(_) => "io",
            CliError::Runtime(_) => "runtime",
        }
    }

    /// Machine-readable form written to stderr.
    pub fn to_json(&self) -> String {
        let details: Vec<String> = match self {
            CliError::Config(v) => v.clone(),
            _ => Vec::new(),
        };
        json!({
            "error": {
                "kind": self.kind(),
                "exit_code": self.exit_code(),
                "message": self.to_string(),
                "details": details,
            }
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(v) => write!(f, "invalid configuration: {}", v.join("; ")),
            CliError::Format(m) => write!(f, "malformed input: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl From<spintrack_core::Error> for CliError {
    fn from(e: spintrack_core::Error) -> Self {
        match e {
            spintrack_core::Error::Config(v) => CliError::Config(v),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

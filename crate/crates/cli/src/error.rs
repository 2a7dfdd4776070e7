use std::fmt;

use serde::Serialize;

/// Failure of one run, mapped to an exit status.
#[derive(Debug)]
pub enum CliError {
    /// Rejected before any compute; exit 2.
    Config { field: String, message: String },
    /// The library refused or failed; exit 1.
    Compute(wishart_states::Error),
    /// Reading inputs or writing artifacts failed; exit 3.
    Io(String),
}

impl CliError {
    pub fn config(field: &str, message: impl Into<String>) -> Self {
        CliError::Config { field: field.to_string(), message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Compute(_) => 1,
            CliError::Io(_) => 3,
        }
    }

    /// One-line JSON diagnostic for stderr.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Diag<'a> {
            error: &'a str,
            #[serde(skip_serializing_if = "Option::is_none")]
            field: Option<&'a str>,
            message: String,
        }
        let d = match self {
            CliError::Config { field, message } => Diag { error: "config", field: Some(field), message: message.clone() },
            CliError::Compute(e) => Diag { error: "compute", field: None, message: e.to_string() },
            CliError::Io(m) => Diag { error: "io", field: None, message: m.clone() },
        };
        serde_json::to_string(&d).expect("plain strings serialize")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config { field, message } => write!(f, "invalid config ({field}): {message}"),
            CliError::Compute(e) => write!(f, "{e}"),
            CliError::Io(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<wishart_states::Error> for CliError {
    fn from(e: wishart_states::Error) -> Self {
        match e {
            wishart_states::Error::Io(e) => CliError::Io(e.to_string()),
            e => CliError::Compute(e),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

//! Command-line front end: data ingestion, configuration, and orchestration
//! of simulate / fit / select / forecast / residuals / study.

pub mod config;
pub mod data;
pub mod report;
pub mod run;

pub use run::run;

/// Exit-code classification: configuration problems exit 2, runtime
/// failures exit 1.
#[derive(Debug)]
pub struct CliError {
    pub kind: CliErrorKind,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CliErrorKind {
    Config,
    Runtime,
}

impl CliError {
    pub fn config(message: String) -> Self {
        CliError {
            kind: CliErrorKind::Config,
            message,
        }
    }

    pub fn runtime(message: String) -> Self {
        CliError {
            kind: CliErrorKind::Runtime,
            message,
        }
    }

    pub fn from_config_err(e: garma::Error) -> Self {
        CliError::config(e.to_string())
    }

    pub fn from_runtime_err(e: garma::Error) -> Self {
        CliError::runtime(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            CliErrorKind::Config => 2,
            CliErrorKind::Runtime => 1,
        }
    }

    /// One-line machine-readable error record for stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": {
                "kind": match self.kind {
                    CliErrorKind::Config => "config",
                    CliErrorKind::Runtime => "runtime",
                },
                "message": self.message,
            }
        })
        .to_string()
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for CliError {}

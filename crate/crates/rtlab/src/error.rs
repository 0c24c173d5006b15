//! CLI error type with the stable exit-code contract.

use thiserror::Error;

/// Exit code for configuration/validation failures.
pub const EXIT_CONFIG: u8 = 2;
/// Exit code for computation failures.
pub const EXIT_COMPUTE: u8 = 1;
/// Exit code for scenario assertion failures (the report is still written).
pub const EXIT_ASSERTION: u8 = 3;

/// Errors surfaced by the CLI, split by exit code: configuration problems
/// (bad files, bad schemas, bad parameter values) exit with 2, computation
/// problems (numerics, IO while writing reports) exit with 1.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Compute(String),
}

impl CliError {
    /// Configuration error with a context prefix (typically the JSON path or
    /// the flag name the problem was found under).
    pub fn config(context: &str, detail: impl core::fmt::Display) -> Self {
        CliError::Config(format!("{context}: {detail}"))
    }

    /// Computation error with a context prefix.
    pub fn compute(context: &str, detail: impl core::fmt::Display) -> Self {
        CliError::Compute(format!("{context}: {detail}"))
    }

    /// The process exit code this error maps to.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Compute(_) => EXIT_COMPUTE,
        }
    }
}

/// Convenience alias used throughout the CLI.
pub type CliResult<T> = Result<T, CliError>;

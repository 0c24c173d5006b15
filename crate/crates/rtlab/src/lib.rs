//! Command-line front end for the robustness/accuracy laboratory.
//!
//! Four commands sit on top of `rtlab-core`:
//!
//! * `metrics` — the metric table (clean, corrupted-instance,
//!   prediction-change, and error-region rows) for a JSON-configured task;
//! * `scenario` — one of the twelve verification scenarios, with its
//!   assertions evaluated and reported;
//! * `scan` — response-line fits across a channel-family parameter grid;
//! * `audit` — every relation checker on its pinned canonical instance, with
//!   erratum flags where the printed constants disagree with the oracles.
//!
//! Exit codes are a stable contract: 0 success, 1 computation error, 2
//! configuration error, 3 scenario assertion failure (the report is still
//! written). The `RTLAB_TOLERANCE` environment variable overrides the
//! default `1e-12` equality tolerance recorded in reports; `--normalize`
//! zeroes the report timestamp so reruns are byte-identical.

pub mod audit;
pub mod commands;
pub mod config;
pub mod error;
pub mod report;

pub use error::{CliError, CliResult, EXIT_ASSERTION, EXIT_COMPUTE, EXIT_CONFIG};

/// Default equality tolerance recorded in reports, overridable via
/// `RTLAB_TOLERANCE`.
pub const DEFAULT_TOLERANCE: f64 = rtlab_core::DEFAULT_TOLERANCE;

/// Resolve the report tolerance from the environment.
pub fn tolerance_from_env() -> CliResult<f64> {
    match std::env::var("RTLAB_TOLERANCE") {
        Err(std::env::VarError::NotPresent) => Ok(DEFAULT_TOLERANCE),
        Err(e) => Err(CliError::config("RTLAB_TOLERANCE", e)),
        Ok(raw) => {
            let value: f64 = raw
                .parse()
                .map_err(|e| CliError::config("RTLAB_TOLERANCE", format!("`{raw}`: {e}")))?;
            if !value.is_finite() || value <= 0.0 {
                return Err(CliError::config(
                    "RTLAB_TOLERANCE",
                    format!("tolerance must be a positive finite number, got {value}"),
                ));
            }
            Ok(value)
        }
    }
}

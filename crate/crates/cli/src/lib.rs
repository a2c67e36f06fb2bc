//! Config-driven experiment runner for `perispec-core`.
//!
//! [`run`] loads a config, executes one task and writes its artifacts:
//! CSV tables, `summary.json` and a plain-text `report.txt`.

pub mod config;
pub mod report;
pub mod tasks;
pub mod validate;

use std::fmt;
use std::path::{Path, PathBuf};

use perispec_core::Error as CoreError;

pub use config::{load_config, parse_config, ConfigError, ExperimentConfig, Task};
pub use report::Report;

pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    /// Malformed config or parameters rejected while setting up.
    Config(String),
    /// Failure while computing or writing results.
    Numeric(String),
    /// The validate task ran but at least one check failed.
    Validation { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numeric(_) => EXIT_NUMERIC,
            CliError::Validation { .. } => EXIT_VALIDATION,
        }
    }

    /// Setup-time errors are the config's fault; step instabilities and
    /// non-convergence are numerical whenever they occur.
    pub(crate) fn setup(e: CoreError) -> Self {
        match e {
            CoreError::UnstableStep { .. } | CoreError::NonConvergence(_) => {
                CliError::Numeric(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }

    pub(crate) fn compute(e: CoreError) -> Self {
        match e {
            CoreError::InvalidParameter(_)
            | CoreError::Expression(_)
            | CoreError::UnknownProfile(_)
            | CoreError::DimensionMismatch(_)
            | CoreError::WeightData(_) => CliError::Config(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numeric(m) => write!(f, "numerical failure: {m}"),
            CliError::Validation { failed, total } => {
                write!(
                    f,
                    "validation failed: {failed} of {total} checks did not pass"
                )
            }
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

/// Where artifacts go: the flag, then `[output] dir`, then `perispec-out`.
pub fn resolve_output_dir(flag: Option<&Path>, config: &ExperimentConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("perispec-out"))
}

/// Runs the task described by the config at `config_path`.
pub fn run(config_path: &Path, output_flag: Option<&Path>) -> Result<Report, CliError> {
    let config = load_config(config_path)?;
    let out_dir = resolve_output_dir(output_flag, &config);
    run_config(&config, &out_dir)
}

pub fn run_config(config: &ExperimentConfig, out_dir: &Path) -> Result<Report, CliError> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", out_dir.display())))?;
    let report = tasks::execute(config, out_dir)?;
    report.write(out_dir).map_err(CliError::compute)?;
    let failed = report.failed_checks();
    if config.task == Task::Validate && failed > 0 {
        return Err(CliError::Validation {
            failed,
            total: report.checks.len(),
        });
    }
    Ok(report)
}

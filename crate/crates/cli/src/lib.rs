//! Command-line front end for `vif-ancova`.
//!
//! Each subcommand resolves a [`ScenarioConfig`], runs the library and returns
//! an [`Outcome`] that is written as a text (TOML) or CSV report together with
//! the resolved configuration.

pub mod commands;
pub mod config;

use std::fmt;
use std::fs;
use std::io::{self, Write};

use vif_ancova::report::{CsvTable, TextDocument};

pub use config::{Format, ScenarioConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Config(String),
    Usage(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Usage(_) => EXIT_CONFIG,
            Self::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(m) => write!(f, "configuration error: {m}"),
            Self::Usage(m) => write!(f, "usage error: {m}"),
            Self::Numerical(m) => write!(f, "numerical error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<vif_ancova::Error> for CliError {
    fn from(e: vif_ancova::Error) -> Self {
        use vif_ancova::Error as E;
        match e {
            E::InvalidCounts { .. }
            | E::InvalidDesign(_)
            | E::InvalidSpec(_)
            | E::Csv(_)
            | E::DimensionMismatch { .. }
            | E::DimensionError(_)
            | E::TooFewReplications { .. }
            | E::NotEnumerable(_)
            | E::NonBinaryAssignment { .. }
            | E::DegenerateAssignment { .. } => Self::Config(e.to_string()),
            _ => Self::Numerical(e.to_string()),
        }
    }
}

/// A finished command: its report in both formats and whether its checks passed.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub command: &'static str,
    pub text: TextDocument,
    pub csv: CsvTable,
    pub passed: bool,
    /// Human-readable lines for stderr.
    pub notes: Vec<String>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            EXIT_OK
        } else {
            EXIT_CHECK_FAILED
        }
    }

    pub fn render(&self, format: Format) -> Result<Vec<u8>, CliError> {
        match format {
            Format::Text => Ok(self.text.clone().finish().into_bytes()),
            Format::Csv => {
                let mut buf = Vec::new();
                self.csv.write(&mut buf)?;
                Ok(buf)
            }
        }
    }
}

/// Writes the report to `output.dir` (with `resolved_config.toml`) or stdout.
pub fn emit(config: &ScenarioConfig, outcome: &Outcome) -> Result<(), CliError> {
    let format = config.format()?;
    let body = outcome.render(format)?;
    match &config.output.dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("output.dir {}: {e}", dir.display())))?;
            let ext = match format {
                Format::Text => "txt",
                Format::Csv => "csv",
            };
            let write = |name: String, bytes: &[u8]| {
                fs::write(dir.join(&name), bytes)
                    .map_err(|e| CliError::Config(format!("output.dir {}: {e}", dir.join(&name).display())))
            };
            write(format!("{}.{ext}", outcome.command), &body)?;
            write("resolved_config.toml".into(), config.to_toml().as_bytes())?;
        }
        None => {
            io::stdout()
                .write_all(&body)
                .map_err(|e| CliError::Config(format!("stdout: {e}")))?;
        }
    }
    Ok(())
}

//! Configuration-driven batch runner behind the `semiclassical` binary.
//!
//! A run reads one JSON configuration, validates all of it up front, runs
//! the selected experiment and writes CSV files plus `manifest.json` (last)
//! into the output directory.

mod config;
mod output;
mod run;

use std::path::PathBuf;

pub use config::{
    parse_config, parse_config_str, ConfigErrors, ExperimentConfig, GridConfig, InitialConfig,
    InitialKind, Mode, PotentialConfig, TimeConfig,
};
pub use output::{format_number, Cell, CsvWriter};
pub use run::{run, ConvergenceOrder, OutputFile, RunManifest, StageTiming, MANIFEST_FILE};

/// Exit status for a configuration problem.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for a failure inside a numerical stage.
pub const EXIT_NUMERIC: i32 = 3;
/// Exit status for file-system errors.
pub const EXIT_IO: i32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigErrors),

    #[error("stage `{stage}` failed: {source}")]
    Numeric {
        stage: &'static str,
        source: crate::Error,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numeric { .. } => EXIT_NUMERIC,
            CliError::Io { .. } => EXIT_IO,
        }
    }
}

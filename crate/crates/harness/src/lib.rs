//! Scenario files, statistics, and CSV/SVG artifacts around the core
//! simulation, plus the `evcs` command line.

pub mod cli;
pub mod commands;
pub mod config;
pub mod plot;
pub mod series;
pub mod stats;

use std::path::Path;

use evcs_core::mitigate::MitigateError;
use evcs_core::plant::PlantError;
use evcs_core::td3::Td3Error;
use thiserror::Error;

pub use config::ScenarioConfig;
pub use stats::{compute_stats, Phase, RunStats, StatsError, Summary};

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    MissingBundle(String),
    #[error("{0}")]
    Divergence(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("{0}")]
    Simulation(String),
}

impl HarnessError {
    /// Stable tag used in the one-line CLI error report.
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Config(_) => "config",
            HarnessError::Io(_) => "io",
            HarnessError::MissingBundle(_) => "missing_bundle",
            HarnessError::Divergence(_) => "divergence",
            HarnessError::Stats(_) => "stats",
            HarnessError::Simulation(_) => "simulation",
        }
    }
}

impl From<PlantError> for HarnessError {
    fn from(e: PlantError) -> Self {
        match e {
            PlantError::NumericalDivergence { .. } => HarnessError::Divergence(e.to_string()),
            PlantError::Calibration(_) | PlantError::InvalidParams(_) => HarnessError::Config(e.to_string()),
        }
    }
}

impl From<MitigateError> for HarnessError {
    fn from(e: MitigateError) -> Self {
        match e {
            MitigateError::Diverged { .. } => HarnessError::Divergence(e.to_string()),
            MitigateError::MissingAgent(_) => HarnessError::MissingBundle(e.to_string()),
            MitigateError::Plant(p) => p.into(),
            MitigateError::Scenario(_) => HarnessError::Config(e.to_string()),
            MitigateError::MissingSource(_) => HarnessError::Simulation(e.to_string()),
        }
    }
}

impl From<Td3Error> for HarnessError {
    fn from(e: Td3Error) -> Self {
        match e {
            Td3Error::Plant(p) => p.into(),
            Td3Error::Config(_) => HarnessError::Config(e.to_string()),
            Td3Error::Persist(_) | Td3Error::WrongAgent { .. } => HarnessError::MissingBundle(e.to_string()),
            Td3Error::Neural(_) => HarnessError::Simulation(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io(format!("{}: {e}", path.display()))
}

/// Write through a temporary file in the destination directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    use std::io::Write;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(dir, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        let _ = tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644));
    }
    tmp.as_file().sync_all().map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e))?;
    Ok(())
}

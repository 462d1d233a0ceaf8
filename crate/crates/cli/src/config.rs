use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use gwhp_core::dataset::SplitConfig;
use gwhp_core::geogen::GradientRange;
use gwhp_core::lahm::LahmParams;
use gwhp_core::nn::ModelConfig;
use gwhp_core::sim::{ScenarioSpec, SimParams, TransportConfig};
use gwhp_core::surrogate::TrainConfig;
use gwhp_core::Grid;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatagenConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub grid: Grid,
    #[serde(default)]
    pub gradient_range: GradientRange,
    #[serde(default)]
    pub sim: SimParams,
    #[serde(default)]
    pub transport: TransportConfig,
}

impl Default for DatagenConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            grid: Grid::default(),
            gradient_range: GradientRange::default(),
            sim: SimParams::default(),
            transport: TransportConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub split: SplitConfig,
    /// Seed of the weight initialization.
    #[serde(default)]
    pub init_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LahmRunConfig {
    pub schema_version: u32,
    pub lahm: LahmParams,
    #[serde(default)]
    pub grid: Grid,
    /// Defaults to the center cell.
    #[serde(default)]
    pub well_cell: Option<(usize, usize)>,
    /// Flow direction, counter-clockwise from +x.
    #[serde(default)]
    pub flow_angle_deg: f64,
}

/// A bare scenario or a sample sidecar holding one.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ScenarioFile {
    Spec(ScenarioSpec),
    Sidecar { spec: ScenarioSpec },
}

impl ScenarioFile {
    pub fn into_spec(self) -> ScenarioSpec {
        match self {
            Self::Spec(s) | Self::Sidecar { spec: s } => s,
        }
    }
}

pub trait Versioned {
    fn schema_version(&self) -> u32;
}

impl Versioned for DatagenConfig {
    fn schema_version(&self) -> u32 {
        self.schema_version
    }
}

impl Versioned for TrainRunConfig {
    fn schema_version(&self) -> u32 {
        self.schema_version
    }
}

impl Versioned for LahmRunConfig {
    fn schema_version(&self) -> u32 {
        self.schema_version
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

pub fn read_config<T: DeserializeOwned + Versioned>(path: &Path) -> Result<T, CliError> {
    let c: T = read_json(path)?;
    if c.schema_version() != SCHEMA_VERSION {
        return Err(CliError::Validation(format!(
            "{}: schema_version {} is not supported (expected {SCHEMA_VERSION})",
            path.display(),
            c.schema_version()
        )));
    }
    Ok(c)
}

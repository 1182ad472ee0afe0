//! Run configuration files (JSON or TOML) for the CLI and the FFI layer.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{ChargingEnv, EnvConfig, EnvError};
use crate::exogenous::{generate_synthetic_defaults, DataError, Datasets, SyntheticProfile};
use crate::topology::{preset_station, Layout, PresetParams, StationTree, TopologyError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("cannot parse {path}: {msg}")]
    Parse { path: String, msg: String },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Which station to simulate: a preset, or a JSON tree file when `file` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StationConfig {
    pub layout: Layout,
    pub ac_ports: usize,
    pub dc_ports: usize,
    pub params: PresetParams,
    pub file: Option<PathBuf>,
}

impl Default for StationConfig {
    fn default() -> Self {
        Self { layout: Layout::MultiType, ac_ports: 6, dc_ports: 10, params: PresetParams::default(), file: None }
    }
}

impl StationConfig {
    pub fn build(&self) -> Result<StationTree, TopologyError> {
        match &self.file {
            Some(path) => StationTree::load(path),
            None => preset_station(self.layout, self.ac_ports, self.dc_ports, &self.params),
        }
    }
}

/// Exogenous data: CSV/JSON files from `dir` where present, synthetic otherwise.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub dir: Option<PathBuf>,
    pub synthetic: SyntheticProfile,
    /// Seed of the synthetic price noise.
    pub seed: u64,
}

impl DataConfig {
    pub fn build(&self, env: &EnvConfig) -> Result<Datasets, DataError> {
        match &self.dir {
            Some(dir) => Datasets::load_dir(dir, &self.synthetic, self.seed, env.dt_min, env.episode_steps),
            None => Ok(generate_synthetic_defaults(&self.synthetic, self.seed, env.dt_min, env.episode_steps)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub station: StationConfig,
    pub data: DataConfig,
    pub seed: u64,
    pub episodes: usize,
    pub batch: usize,
    /// Worker threads; `None` uses every available core.
    pub workers: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: EnvConfig::default(),
            station: StationConfig::default(),
            data: DataConfig::default(),
            seed: 0,
            episodes: 10,
            batch: 16,
            workers: None,
        }
    }
}

impl RunConfig {
    /// Reads a `.toml` file as TOML and anything else as JSON.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), msg: e.to_string() })?;
        let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        let parsed = if is_toml { Self::from_toml_str(&text) } else { Self::from_json_str(&text) };
        parsed.map_err(|msg| ConfigError::Parse { path: path.display().to_string(), msg })
    }

    pub fn from_json_str(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn build_env(&self) -> Result<ChargingEnv, ConfigError> {
        let station = self.station.build()?;
        let data = self.data.build(&self.env)?;
        Ok(ChargingEnv::new(self.env.clone(), Arc::new(station), Arc::new(data))?)
    }
}

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "manifest.json";

/// Record of one command run, written next to its outputs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// sha256 of the effective configuration as JSON.
    pub config_hash: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// Wall-clock seconds per phase.
    pub timings: BTreeMap<String, f64>,
    pub version: String,
}

impl RunManifest {
    pub fn new(command: &str, config: &impl Serialize) -> serde_json::Result<Self> {
        let config = serde_json::to_value(config)?;
        let hash = hex::encode(Sha256::digest(serde_json::to_vec(&config)?));
        Ok(Self {
            command: command.into(),
            config_hash: hash,
            config,
            version: concat!("gwhp ", env!("CARGO_PKG_VERSION")).into(),
            ..Default::default()
        })
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<PathBuf> {
        let path = dir.join(MANIFEST_NAME);
        std::fs::write(&path, serde_json::to_vec_pretty(self)?)?;
        Ok(path)
    }
}

//! Per-run manifests: config digest, seed and content hashes of every
//! artifact read or written.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::formats::write_json;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_digest: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub details: BTreeMap<String, Value>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot hash {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        Self {
            command: command.to_string(),
            config_digest: cfg.digest(),
            seed: cfg.seed,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            details: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn detail(&mut self, key: &str, value: impl Serialize) {
        self.details.insert(key.to_string(), serde_json::to_value(value).expect("serializable detail"));
    }

    /// Written next to `primary` as `<primary>.manifest.json`, or inside it
    /// as `manifest.json` when `primary` is a directory.
    pub fn write_for(&self, primary: &Path) -> Result<PathBuf> {
        let path = if primary.is_dir() {
            primary.join("manifest.json")
        } else {
            let mut name = primary.file_name().unwrap_or_default().to_os_string();
            name.push(".manifest.json");
            primary.with_file_name(name)
        };
        write_json(self, &path)?;
        Ok(path)
    }
}

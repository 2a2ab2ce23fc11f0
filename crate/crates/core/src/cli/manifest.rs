use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RawConfig;
use crate::error::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: PathBuf,
    pub sha256: String,
}

/// Everything needed to reproduce one command's outputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    /// Effective configuration after defaults and flag overrides.
    pub config: RawConfig,
    /// Command-specific flags that are not part of the config.
    pub flags: BTreeMap<String, String>,
    /// Role (e.g. `problems`) to path and content hash.
    pub inputs: BTreeMap<String, InputRecord>,
    /// Files written next to the manifest.
    pub outputs: Vec<String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: RawConfig) -> Self {
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config,
            flags: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn add_input(&mut self, role: &str, path: &Path) -> Result<()> {
        let rec = InputRecord { path: path.to_path_buf(), sha256: sha256_file(path)? };
        self.inputs.insert(role.to_string(), rec);
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        crate::io::write_atomic(&dir.join(MANIFEST_NAME), &serde_json::to_vec_pretty(self)?)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_NAME);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

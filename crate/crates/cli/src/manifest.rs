use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

/// Record of one CLI run, written next to its outputs as
/// `manifest_<subcommand>.json`.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub tool_version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub models: Option<PathBuf>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub inputs: BTreeMap<String, PathBuf>,
    pub seeds: BTreeMap<String, u64>,
    pub settings: BTreeMap<String, serde_json::Value>,
    pub workers: usize,
    pub outputs: Vec<PathBuf>,
    pub wall_time_s: f64,
    #[serde(skip)]
    dir: PathBuf,
}

impl RunManifest {
    pub fn new(subcommand: &str, dir: PathBuf) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            scenario: None,
            dataset: None,
            models: None,
            inputs: BTreeMap::new(),
            seeds: BTreeMap::new(),
            settings: BTreeMap::new(),
            workers: 1,
            outputs: Vec::new(),
            wall_time_s: 0.0,
            dir,
        }
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        let value = serde_json::to_value(value).expect("setting serializes");
        self.settings.insert(key.to_string(), value);
    }

    pub fn path(&self) -> PathBuf {
        self.dir.join(format!("manifest_{}.json", self.subcommand))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::RunConfig;

/// Record of a run, written as `manifest.json` next to its outputs.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: &'static str,
    pub seed: u64,
    pub threads: usize,
    /// The resolved configuration in TOML, reusable with `--config`.
    pub config: String,
    pub outputs: Vec<PathBuf>,
    pub elapsed_seconds: f64,
    pub summary: serde_json::Value,
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig) -> Result<Self> {
        Ok(Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            seed: cfg.seed,
            threads: rayon::current_num_threads(),
            config: toml::to_string(cfg).context("serializing the configuration")?,
            outputs: Vec::new(),
            elapsed_seconds: 0.0,
            summary: serde_json::Value::Null,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

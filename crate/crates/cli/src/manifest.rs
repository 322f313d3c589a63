use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

/// Provenance record written next to every command's results.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: &'static str,
    pub inputs: Vec<InputDigest>,
    pub config: serde_json::Value,
    pub seeds: serde_json::Map<String, serde_json::Value>,
    pub outputs: Vec<String>,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION"),
            inputs: Vec::new(),
            config: serde_json::Value::Null,
            seeds: serde_json::Map::new(),
            outputs: Vec::new(),
            timestamp: String::new(),
        }
    }

    pub fn input(&mut self, role: &str, path: &Path) -> anyhow::Result<()> {
        let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
        self.inputs.push(InputDigest {
            role: role.to_string(),
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(())
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.seeds.insert(name.to_string(), value.into());
    }

    pub fn config<T: Serialize>(&mut self, config: &T) {
        self.config = serde_json::to_value(config).expect("config serializes");
    }

    /// Writes the manifest as `<command>.manifest.json` in `dir`.
    pub fn write(mut self, dir: &Path) -> anyhow::Result<PathBuf> {
        self.timestamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
        let name = format!("{}.manifest.json", self.command.replace(' ', "_"));
        let path = dir.join(name);
        let text = serde_json::to_string_pretty(&self)? + "\n";
        fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }
}

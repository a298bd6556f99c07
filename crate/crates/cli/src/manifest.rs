//! Run manifests: resolved arguments, seeds and artifact hashes.
//!
//! Every command writes one next to its outputs. Re-running from a manifest
//! in deterministic mode must reproduce the recorded hashes bit for bit.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Full argument vector after the binary name; `rerun` replays this.
    pub argv: Vec<String>,
    pub seed: Option<u64>,
    pub deterministic: bool,
    /// Input path → sha256.
    pub inputs: BTreeMap<String, String>,
    /// Output path → sha256.
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub struct ManifestBuilder {
    manifest: Manifest,
}

impl ManifestBuilder {
    pub fn new(command: &str, argv: Vec<String>, seed: Option<u64>, deterministic: bool) -> Self {
        ManifestBuilder {
            manifest: Manifest {
                tool: "wdjm".to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                command: command.to_string(),
                argv,
                seed,
                deterministic,
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
            },
        }
    }

    pub fn input(&mut self, path: &Path) -> std::io::Result<()> {
        self.manifest
            .inputs
            .insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> std::io::Result<()> {
        self.manifest
            .outputs
            .insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    /// Write `<target>.manifest.json` and return its path.
    pub fn write_next_to(self, target: &Path) -> std::io::Result<PathBuf> {
        let path = manifest_path_for(target);
        let json = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        std::fs::write(&path, json + "\n")?;
        Ok(path)
    }
}

pub fn manifest_path_for(target: &Path) -> PathBuf {
    let mut name = target
        .file_name()
        .map(|n| n.to_string_lossy().to_string())
        .unwrap_or_else(|| "run".to_string());
    name.push_str(".manifest.json");
    target.with_file_name(name)
}

pub fn load_manifest(path: &Path) -> Result<Manifest, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("read {path:?}: {e}"))?;
    serde_json::from_str(&text).map_err(|e| format!("parse {path:?}: {e}"))
}

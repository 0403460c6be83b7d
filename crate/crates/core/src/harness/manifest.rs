//! Run manifests: what was run, with which settings, and digests of the outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub versions: BTreeMap<String, String>,
    /// File name to hex sha256.
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String, HarnessError> {
    let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn sha256_json(value: &serde_json::Value) -> String {
    hex::encode(Sha256::digest(value.to_string().as_bytes()))
}

impl Manifest {
    pub fn new<C: Serialize>(command: &str, seed: u64, config: &C) -> Result<Manifest, HarnessError> {
        let config = serde_json::to_value(config)?;
        let mut versions = BTreeMap::new();
        versions.insert("aurascreen".to_string(), env!("CARGO_PKG_VERSION").to_string());
        versions.insert("checkpoint".to_string(), crate::model::tensor::CHECKPOINT_VERSION.to_string());
        versions.insert("fingerprint_cache".to_string(), "AFP1".to_string());
        Ok(Manifest {
            command: command.to_string(),
            seed,
            config_hash: sha256_json(&config),
            config,
            versions,
            outputs: BTreeMap::new(),
        })
    }

    /// Records the digest of `dir/name`.
    pub fn add_output(&mut self, dir: &Path, name: &str) -> Result<(), HarnessError> {
        let digest = sha256_file(&dir.join(name))?;
        self.outputs.insert(name.to_string(), digest);
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| HarnessError::io(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_output_digests() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.txt"), b"abc").unwrap();
        let mut m = Manifest::new("fp", 3, &serde_json::json!({"width": 1024})).unwrap();
        m.add_output(dir.path(), "a.txt").unwrap();
        assert_eq!(m.outputs["a.txt"], "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        m.write(dir.path()).unwrap();
        let back: serde_json::Value =
            serde_json::from_slice(&fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(back["seed"], 3);
    }
}

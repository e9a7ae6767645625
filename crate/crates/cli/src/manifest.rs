//! Run manifests: every subcommand writes `manifest.json` next to its
//! outputs recording the fully resolved configuration, seed, tool version
//! and input-file digests, so a run can be reproduced from the manifest
//! alone (timestamps excepted).

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

use bcf_core::Result;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub resolved_config: BTreeMap<String, String>,
    pub input_digests: BTreeMap<String, String>,
    pub started_at: String,
    pub finished_at: String,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> RunManifest {
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            resolved_config: BTreeMap::new(),
            input_digests: BTreeMap::new(),
            started_at: chrono::Utc::now().to_rfc3339(),
            finished_at: String::new(),
        }
    }

    pub fn set<T: ToString>(&mut self, key: &str, value: T) {
        self.resolved_config.insert(key.to_string(), value.to_string());
    }

    pub fn digest_input(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path)?;
        let mut h = Sha256::new();
        h.update(&bytes);
        self.input_digests
            .insert(path.display().to_string(), format!("{:x}", h.finalize()));
        Ok(())
    }

    pub fn finish_and_write(mut self, dir: &Path) -> Result<()> {
        self.finished_at = chrono::Utc::now().to_rfc3339();
        let body = serde_json::to_vec_pretty(&self).expect("manifest serializes");
        write_atomic(&dir.join("manifest.json"), &body)
    }
}

/// Writes via a temp file + rename so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

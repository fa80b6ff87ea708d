use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io(path.display().to_string(), e))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub seconds: f64,
}

/// Provenance of everything in a run directory. Paths are relative to the
/// run directory so two runs of the same study compare equal apart from
/// their timings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub versions: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
    /// External inputs read by a stage.
    pub inputs: BTreeMap<String, String>,
    /// Artifacts written into the run directory.
    pub outputs: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn load_or_new(run_dir: &Path) -> Result<Self, CliError> {
        let path = run_dir.join(MANIFEST_FILE);
        if !path.exists() {
            let mut m = RunManifest::default();
            m.versions.insert("spotgrid-core".into(), spotgrid::VERSION.into());
            m.versions.insert("spotgrid-cli".into(), env!("CARGO_PKG_VERSION").into());
            return Ok(m);
        }
        let s = std::fs::read_to_string(&path).map_err(|e| CliError::Io(path.display().to_string(), e))?;
        serde_json::from_str(&s).map_err(|e| CliError::Config(format!("corrupt manifest {}: {e}", path.display())))
    }

    pub fn save(&self, run_dir: &Path) -> Result<(), CliError> {
        let path = run_dir.join(MANIFEST_FILE);
        let s = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, s).map_err(|e| CliError::Io(path.display().to_string(), e))
    }

    /// Digest of the reproducible part of the manifest: everything except
    /// stage timings.
    pub fn output_digest(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.outputs {
            h.update(k.as_bytes());
            h.update([0]);
            h.update(v.as_bytes());
            h.update([0]);
        }
        hex::encode(h.finalize())
    }
}

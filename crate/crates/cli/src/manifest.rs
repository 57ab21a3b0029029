//! Experiment manifest: a deterministic inventory of everything a run
//! produced, hashed so two runs can be compared by comparing one file.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use loadcast_core::loadgen::{phase_seed, PRNG_NAME};
use loadcast_core::svr::MODEL_FORMAT_VERSION;
use loadcast_core::{Error, Result};

use crate::config::{hex_digest, ExperimentConfig};
use crate::pipeline::{ARTIFACTS, MANIFEST_FILE, SIDECARS};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Versions {
    pub loadcast: String,
    pub model_format: u32,
    pub prng: String,
}

/// Written as `manifest.json` at the end of a full run. Contains no
/// timestamps, so identical configs produce identical manifests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub versions: Versions,
    /// Seeds derived from the global seed for each randomized phase.
    pub phase_seeds: BTreeMap<String, u64>,
    /// The nine primary artifacts of a run.
    pub artifacts: BTreeMap<String, FileEntry>,
    /// Metadata JSONs accompanying the artifacts.
    pub sidecars: BTreeMap<String, FileEntry>,
}

fn entry_for(dir: &Path, name: &str) -> Result<FileEntry> {
    let path = dir.join(name);
    let bytes = fs::read(&path)
        .map_err(|e| Error::invalid(format!("cannot hash artifact {}: {e}", path.display())))?;
    Ok(FileEntry {
        sha256: hex_digest(&bytes),
        bytes: bytes.len() as u64,
    })
}

/// Hashes every artifact the run wrote and assembles the manifest.
pub fn build_manifest(config: &ExperimentConfig, output_dir: &Path) -> Result<Manifest> {
    let mut artifacts = BTreeMap::new();
    for name in ARTIFACTS {
        artifacts.insert(name.to_string(), entry_for(output_dir, name)?);
    }
    let mut sidecars = BTreeMap::new();
    for name in SIDECARS {
        sidecars.insert(name.to_string(), entry_for(output_dir, name)?);
    }
    Ok(Manifest {
        config_sha256: config.sha256(),
        versions: Versions {
            loadcast: env!("CARGO_PKG_VERSION").to_string(),
            model_format: MODEL_FORMAT_VERSION,
            prng: PRNG_NAME.to_string(),
        },
        phase_seeds: BTreeMap::from([(
            "generate".to_string(),
            phase_seed(config.global_seed, "generate"),
        )]),
        artifacts,
        sidecars,
    })
}

impl Manifest {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        text
    }

    pub fn write(&self, output_dir: &Path) -> Result<()> {
        let path = output_dir.join(MANIFEST_FILE);
        fs::write(&path, self.to_json())
            .map_err(|e| Error::invalid(format!("cannot write {}: {e}", path.display())))?;
        Ok(())
    }

    pub fn sha256(&self) -> String {
        hex_digest(self.to_json().as_bytes())
    }
}

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::commands::Failure;

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Record of one command invocation, written as JSON next to its primary
/// output.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub config: Value,
    pub inputs: BTreeMap<String, FileDigest>,
    pub outputs: BTreeMap<String, FileDigest>,
    /// Wall-clock seconds per phase.
    pub timings: BTreeMap<String, f64>,
    #[serde(skip)]
    clock: Option<Instant>,
}

pub fn sha256_file(path: &Path) -> Result<String, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// `path` with `suffix` appended to its file name.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: None,
            config: Value::Null,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            timings: BTreeMap::new(),
            clock: Some(Instant::now()),
        }
    }

    pub fn input(&mut self, role: &str, path: &Path) -> Result<(), Failure> {
        let digest = FileDigest {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        };
        self.inputs.insert(role.to_string(), digest);
        Ok(())
    }

    pub fn output(&mut self, role: &str, path: &Path) -> Result<(), Failure> {
        let digest = FileDigest {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        };
        self.outputs.insert(role.to_string(), digest);
        Ok(())
    }

    /// Records the time since the previous lap (or since creation).
    pub fn lap(&mut self, phase: &str) {
        let now = Instant::now();
        let start = self.clock.replace(now).unwrap_or(now);
        self.timings
            .insert(phase.to_string(), (now - start).as_secs_f64());
    }

    /// Writes `<primary>.manifest.json` and returns its path.
    pub fn write_next_to(&self, primary: &Path) -> Result<PathBuf, Failure> {
        let path = sidecar(primary, ".manifest.json");
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, json + "\n").map_err(|e| Failure::io(&path, e))?;
        Ok(path)
    }
}

//! Per-run provenance record written next to every output.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    /// SHA-256 of the scene file bytes.
    pub scene_sha256: Option<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub float_width: u32,
    pub threads: usize,
    pub git_describe: Option<String>,
    pub crate_version: &'static str,
    /// Milliseconds per named phase.
    pub wall_ms: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(command: &str, float_width: u32, threads: usize) -> Self {
        RunManifest {
            command: command.to_string(),
            args: std::env::args().collect(),
            scene_sha256: None,
            config: serde_json::Value::Null,
            seed: None,
            float_width,
            threads,
            git_describe: git_describe(),
            crate_version: env!("CARGO_PKG_VERSION"),
            wall_ms: BTreeMap::new(),
        }
    }

    pub fn hash_scene(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        self.scene_sha256 = Some(sha256_hex(&bytes));
        Ok(())
    }

    pub fn time(&mut self, phase: &str, ms: f64) {
        self.wall_ms.insert(phase.to_string(), ms);
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn git_describe() -> Option<String> {
    let out = Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .ok()?;
    out.status
        .success()
        .then(|| String::from_utf8_lossy(&out.stdout).trim().to_string())
        .filter(|s| !s.is_empty())
}

/// `out.ppm` -> `out.ppm.manifest.json`.
pub fn sidecar(path: &Path) -> std::path::PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    path.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn sidecar_appends_suffix() {
        assert_eq!(sidecar(Path::new("a/b.ppm")), Path::new("a/b.ppm.manifest.json"));
    }
}

//! Run manifests: config hash, artifact version, per-stage timings, a file
//! inventory with checksums, and monitor verdicts. JSON with sorted keys.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Default, Serialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub timings_seconds: BTreeMap<String, f64>,
    pub files: BTreeMap<String, FileEntry>,
    pub monitors: BTreeMap<String, bool>,
    pub notes: BTreeMap<String, String>,
}

pub fn sha256_hex(data: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(data);
    let out = h.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn new(command: &str, config_text: &str, seed: u64) -> Self {
        RunManifest {
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_sha256: sha256_hex(config_text.as_bytes()),
            seed,
            ..Default::default()
        }
    }

    pub fn time(&mut self, stage: &str, secs: f64) {
        self.timings_seconds.insert(stage.to_string(), secs);
    }

    pub fn monitor(&mut self, name: &str, pass: bool) {
        self.monitors.insert(name.to_string(), pass);
    }

    pub fn note(&mut self, key: &str, value: String) {
        self.notes.insert(key.to_string(), value);
    }

    /// Register an emitted file: checksum over the current on-disk bytes.
    pub fn add_file(&mut self, root: &Path, path: &Path) -> anyhow::Result<()> {
        let data = std::fs::read(path)?;
        let rel = path.strip_prefix(root).unwrap_or(path);
        self.files.insert(
            rel.to_string_lossy().to_string(),
            FileEntry { sha256: sha256_hex(&data), bytes: data.len() as u64 },
        );
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<PathBuf> {
        let path = dir.join("run_manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }
}

/// Refuse to persist non-finite numbers; thresholds go through their own
/// sentinel path ("inf" strings), so a NaN or a bare float infinity here is
/// always a defect upstream.
pub fn guard_csv(content: &str) -> anyhow::Result<()> {
    for (ln, line) in content.lines().enumerate() {
        for field in line.split(',') {
            let f = field.trim();
            if f.eq_ignore_ascii_case("nan") {
                anyhow::bail!("NaN in CSV output at line {}", ln + 1);
            }
        }
    }
    Ok(())
}

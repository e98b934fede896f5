//! Run artifacts: in-memory collection, atomic writes and the manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};
use crate::scenario::Scenario;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Output files keyed by path relative to the run directory.
#[derive(Debug, Default, Clone)]
pub struct Artifacts {
    files: BTreeMap<String, Vec<u8>>,
}

impl Artifacts {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rows serialized with a header from the record's field names.
    pub fn csv<R: Serialize>(&mut self, name: &str, rows: impl IntoIterator<Item = R>) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| LabError::io(format!("csv buffer for {name}"), e.into_error()))?;
        self.insert(name, bytes);
        Ok(())
    }

    pub fn json<V: Serialize>(&mut self, name: &str, value: &V) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.insert(name, bytes);
        Ok(())
    }

    pub fn text(&mut self, name: &str, text: String) {
        self.insert(name, text.into_bytes());
    }

    pub fn insert(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.insert(name.to_string(), bytes);
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.get(name).map(Vec::as_slice)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub scenario_name: String,
    pub scenario_hash: String,
    pub resolved_config: Scenario,
    /// Named sub-seeds derived from the scenario seed.
    pub seeds: BTreeMap<String, u64>,
    pub wall_clock_s: f64,
    pub outputs: Vec<OutputEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).map_err(|e| LabError::io(format!("creating {}", dir.display()), e))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| LabError::io(format!("creating {}", tmp.display()), e))?;
        f.write_all(bytes).map_err(|e| LabError::io(format!("writing {}", tmp.display()), e))?;
        f.sync_all().map_err(|e| LabError::io(format!("syncing {}", tmp.display()), e))?;
    }
    fs::rename(&tmp, path).map_err(|e| LabError::io(format!("renaming into {}", path.display()), e))
}

/// Writes every artifact under `dir`, then the manifest listing them.
pub fn write_run(
    dir: &Path,
    scenario: &Scenario,
    artifacts: &Artifacts,
    seeds: BTreeMap<String, u64>,
    wall_clock_s: f64,
) -> Result<RunManifest> {
    let mut outputs = Vec::with_capacity(artifacts.len());
    for (name, bytes) in &artifacts.files {
        write_atomic(&dir.join(name), bytes)?;
        outputs.push(OutputEntry { path: name.clone(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 });
    }
    let manifest = RunManifest {
        artifact_version: ARTIFACT_VERSION.to_string(),
        scenario_name: scenario.name.clone(),
        scenario_hash: scenario.content_hash(),
        resolved_config: scenario.clone(),
        seeds,
        wall_clock_s,
        outputs,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    write_atomic(&dir.join(MANIFEST_FILE), &bytes)?;
    Ok(manifest)
}

/// Recomputes checksums of the files a manifest lists; returns the paths
/// that are missing or differ.
pub fn verify_manifest(dir: &Path, manifest: &RunManifest) -> Vec<PathBuf> {
    manifest
        .outputs
        .iter()
        .filter(|o| fs::read(dir.join(&o.path)).map(|b| sha256_hex(&b) != o.sha256).unwrap_or(true))
        .map(|o| dir.join(&o.path))
        .collect()
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| LabError::io(format!("reading {}", path.display()), e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ScenarioKind;

    #[derive(Serialize)]
    struct Row {
        x: f64,
        y: f64,
    }

    #[test]
    fn csv_keeps_full_precision() {
        let mut a = Artifacts::new();
        let v = 0.1 + 0.2;
        a.csv("t.csv", [Row { x: v, y: 1e-300 }]).unwrap();
        let text = std::str::from_utf8(a.get("t.csv").unwrap()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x,y"));
        let vals: Vec<f64> = lines.next().unwrap().split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(vals, vec![v, 1e-300]);
    }

    #[test]
    fn manifest_lists_checksums() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifacts::new();
        a.text("b/one.txt", "hello".into());
        a.text("two.txt", "world".into());
        let s = Scenario::template(ScenarioKind::Rayleigh);
        let m = write_run(dir.path(), &s, &a, BTreeMap::new(), 0.0).unwrap();
        assert_eq!(m.outputs.len(), 2);
        assert_eq!(m.outputs[0].path, "b/one.txt");
        assert_eq!(m.outputs[0].sha256, sha256_hex(b"hello"));
        assert_eq!(read_manifest(dir.path()).unwrap(), m);
        assert!(verify_manifest(dir.path(), &m).is_empty());
        fs::write(dir.path().join("two.txt"), "changed").unwrap();
        assert_eq!(verify_manifest(dir.path(), &m).len(), 1);
    }
}

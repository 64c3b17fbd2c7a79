//! Run directories and the manifest that records what a run read and wrote.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_bytes(&bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    /// Relative to the run directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub run_id: String,
    pub command: String,
    pub seed: u64,
    /// Effective configuration after file, environment and flag overrides.
    pub config: serde_json::Value,
    /// Input name → sha256 of its contents.
    pub inputs: BTreeMap<String, String>,
    pub artifacts: Vec<ArtifactEntry>,
    pub metrics: BTreeMap<String, f64>,
    /// Wall-clock milliseconds per stage; the only field that varies between
    /// identical runs.
    pub timings_ms: BTreeMap<String, f64>,
}

impl Manifest {
    pub fn new(run_id: &str, command: &str, seed: u64, config: serde_json::Value) -> Self {
        Self {
            schema_version: 1,
            run_id: run_id.to_string(),
            command: command.to_string(),
            seed,
            config,
            inputs: BTreeMap::new(),
            artifacts: Vec::new(),
            metrics: BTreeMap::new(),
            timings_ms: BTreeMap::new(),
        }
    }

    pub fn add_input(&mut self, name: &str, path: &Path) -> Result<()> {
        self.inputs.insert(name.to_string(), sha256_file(path)?);
        Ok(())
    }

    /// Record a file already written under `root`.
    pub fn add_artifact(&mut self, root: &Path, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let rel = path.strip_prefix(root).unwrap_or(path);
        let rel = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        self.artifacts.retain(|a| a.path != rel);
        self.artifacts.push(ArtifactEntry {
            path: rel,
            sha256: sha256_bytes(&bytes),
            bytes: bytes.len() as u64,
        });
        self.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// `<base>/<run-id>/{tables,series,figures}/`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn create(base: &Path, run_id: &str) -> Result<Self> {
        let root = base.join(run_id);
        for sub in ["tables", "series", "figures"] {
            let p = root.join(sub);
            std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        Ok(Self { root })
    }

    pub fn tables(&self) -> PathBuf {
        self.root.join("tables")
    }

    pub fn series(&self) -> PathBuf {
        self.root.join("series")
    }

    pub fn figures(&self) -> PathBuf {
        self.root.join("figures")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn artifacts_are_relative_and_hashed() {
        let tmp = tempfile::tempdir().unwrap();
        let run = RunDir::create(tmp.path(), "r1").unwrap();
        let f = run.tables().join("a.csv");
        std::fs::write(&f, "x,y\n").unwrap();
        let mut m = Manifest::new("r1", "report", 7, serde_json::json!({"k": 1}));
        m.add_artifact(&run.root, &f).unwrap();
        m.add_artifact(&run.root, &f).unwrap();
        assert_eq!(m.artifacts.len(), 1);
        assert_eq!(m.artifacts[0].path, "tables/a.csv");
        assert_eq!(m.artifacts[0].sha256, sha256_bytes(b"x,y\n"));
        let p = m.write(&run.root).unwrap();
        assert_eq!(Manifest::load(&p).unwrap(), m);
    }
}

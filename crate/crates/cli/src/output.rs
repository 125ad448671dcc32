//! Atomic artifact writes and the run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
    /// CSV header, so the sidecar describes its columns.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub columns: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub preset: Option<String>,
    pub seed: u64,
    /// Fully resolved configuration; feeding this file back through
    /// `--config` reproduces the outputs.
    pub config: Value,
    pub hyperparameters: Value,
    pub wall_clock_secs: f64,
    pub outputs: Vec<OutputFile>,
}

/// Collects artifacts for one run under `dir`.
pub struct Artifacts {
    dir: PathBuf,
    files: Vec<OutputFile>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &[u8], columns: Option<&str>) -> Result<()> {
        write_atomic(&self.dir.join(name), contents)?;
        self.files.push(OutputFile {
            file: name.to_string(),
            sha256: hex::encode(Sha256::digest(contents)),
            bytes: contents.len(),
            columns: columns.map(String::from),
        });
        Ok(())
    }

    pub fn finish(self, mut manifest: RunManifest) -> Result<PathBuf> {
        manifest.outputs = self.files;
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let path = self.dir.join(MANIFEST_FILE);
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}

/// Writes to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp-{}", std::process::id()));
    let result = (|| -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_lists_digests() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifacts::new(dir.path()).unwrap();
        a.write("x.csv", b"a,b\n1,2\n", Some("a,b")).unwrap();
        let path = a
            .finish(RunManifest {
                tool: "rotlab".into(),
                version: "0".into(),
                command: "curves".into(),
                preset: None,
                seed: 1,
                config: Value::Null,
                hyperparameters: Value::Null,
                wall_clock_secs: 0.0,
                outputs: vec![],
            })
            .unwrap();
        let m: RunManifest = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
        assert_eq!(m.outputs.len(), 1);
        assert_eq!(m.outputs[0].sha256, hex::encode(Sha256::digest(b"a,b\n1,2\n")));
        let leftovers: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().contains(".tmp-"))
            .collect();
        assert!(leftovers.is_empty());
    }
}

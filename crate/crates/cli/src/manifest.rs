//! Run manifest: what was produced, from which configuration, with
//! post-write checksum verification.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub artifacts: Vec<ArtifactEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

impl RunManifest {
    /// Build the manifest for the given artifact paths (relative to
    /// `out_dir`), hashing each file as it exists on disk.
    pub fn build(
        out_dir: &Path,
        config_text: &str,
        seed: u64,
        started_unix: u64,
        artifact_paths: &[PathBuf],
    ) -> Result<Self> {
        let mut artifacts = Vec::with_capacity(artifact_paths.len());
        for rel in artifact_paths {
            let full = out_dir.join(rel);
            artifacts.push(ArtifactEntry {
                path: rel.to_string_lossy().into_owned(),
                sha256: sha256_file(&full)?,
            });
        }
        artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: sha256_hex(config_text.as_bytes()),
            seed,
            started_unix,
            finished_unix: unix_now(),
            artifacts,
        })
    }

    /// Re-hash every listed artifact and compare against the recorded sums.
    pub fn verify(&self, out_dir: &Path) -> Result<()> {
        for entry in &self.artifacts {
            let sum = sha256_file(&out_dir.join(&entry.path))?;
            if sum != entry.sha256 {
                return Err(CliError::Io(format!(
                    "checksum mismatch for {}: manifest {} vs disk {}",
                    entry.path, entry.sha256, sum
                )));
            }
        }
        Ok(())
    }

    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        let path = out_dir.join("manifest.toml");
        let text = toml::to_string_pretty(self).map_err(CliError::io)?;
        std::fs::write(&path, text)
            .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(CliError::io)
    }
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn manifest_hashes_and_verifies() {
        let dir = tempdir().unwrap();
        std::fs::write(dir.path().join("a.tsv"), "hello").unwrap();
        std::fs::write(dir.path().join("b.tsv"), "world").unwrap();
        let manifest = RunManifest::build(
            dir.path(),
            "config text",
            7,
            unix_now(),
            &[PathBuf::from("a.tsv"), PathBuf::from("b.tsv")],
        )
        .unwrap();
        manifest.verify(dir.path()).unwrap();
        let path = manifest.write(dir.path()).unwrap();
        let loaded = RunManifest::load(&path).unwrap();
        assert_eq!(loaded, manifest);

        // Tampering is caught.
        std::fs::write(dir.path().join("a.tsv"), "changed").unwrap();
        assert!(manifest.verify(dir.path()).is_err());
    }
}

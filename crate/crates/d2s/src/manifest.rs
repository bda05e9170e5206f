//! Run manifests: what a command read, what it wrote, and with which
//! settings. A manifest is written before any output and rewritten with
//! output digests once the command finishes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::{atomic_write, check_writable, read_file, read_text};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Running,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    /// Hex SHA-256; `None` for outputs not written yet.
    pub sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub status: Status,
    /// Wall-clock milliseconds per phase.
    pub timings_ms: BTreeMap<String, u64>,
}

/// Paths are recorded absolute so a manifest verifies from any directory.
fn absolute(p: &Path) -> Result<PathBuf> {
    std::path::absolute(p).map_err(|e| Error::io(p, e))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_bytes(&read_file(path)?))
}

/// An open manifest. Dropping it without [`ManifestWriter::finish`] leaves
/// the `running` manifest on disk, which marks an interrupted command.
pub struct ManifestWriter {
    path: PathBuf,
    manifest: RunManifest,
    phase_start: Instant,
}

impl ManifestWriter {
    /// Digests the inputs and writes the manifest. Fails, writing nothing,
    /// if the manifest or any output exists and `force` is off.
    pub fn begin(
        path: &Path,
        command: &str,
        seed: Option<u64>,
        config: serde_json::Value,
        inputs: &[PathBuf],
        outputs: &[PathBuf],
        force: bool,
    ) -> Result<Self> {
        check_writable(path, force)?;
        for p in outputs {
            check_writable(p, force)?;
        }
        let inputs = inputs
            .iter()
            .map(|p| {
                Ok(FileDigest {
                    path: absolute(p)?,
                    sha256: Some(sha256_file(p)?),
                })
            })
            .collect::<Result<_>>()?;
        let manifest = RunManifest {
            command: command.into(),
            tool_version: TOOL_VERSION.into(),
            seed,
            config,
            inputs,
            outputs: outputs
                .iter()
                .map(|p| {
                    Ok(FileDigest {
                        path: absolute(p)?,
                        sha256: None,
                    })
                })
                .collect::<Result<_>>()?,
            status: Status::Running,
            timings_ms: BTreeMap::new(),
        };
        let w = Self {
            path: path.to_path_buf(),
            manifest,
            phase_start: Instant::now(),
        };
        w.write()?;
        Ok(w)
    }

    /// Records the time since the previous phase ended.
    pub fn phase(&mut self, name: &str) {
        let ms = self.phase_start.elapsed().as_millis() as u64;
        self.manifest.timings_ms.insert(name.into(), ms);
        self.phase_start = Instant::now();
    }

    /// Digests every output and marks the run complete.
    pub fn finish(mut self) -> Result<RunManifest> {
        for out in &mut self.manifest.outputs {
            out.sha256 = Some(sha256_file(&out.path)?);
        }
        self.manifest.status = Status::Complete;
        self.write()?;
        Ok(self.manifest)
    }

    fn write(&self) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.manifest)
            .map_err(|e| Error::Data(format!("serializing manifest: {e}")))?;
        // The writer owns this path from `begin` on.
        atomic_write(&self.path, format!("{text}\n").as_bytes(), true)
    }
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::format(path, e.line() as u64, e.to_string()))
}

/// Re-reads a complete manifest and checks every recorded digest against
/// the files on disk.
pub fn verify_manifest(path: &Path) -> Result<RunManifest> {
    let m = read_manifest(path)?;
    if m.status != Status::Complete {
        return Err(Error::Data(format!("{} records an unfinished run", path.display())));
    }
    for f in m.inputs.iter().chain(&m.outputs) {
        let expected = f
            .sha256
            .as_deref()
            .ok_or_else(|| Error::Data(format!("{} has no digest", f.path.display())))?;
        let actual = sha256_file(&f.path)?;
        if actual != expected {
            return Err(Error::Data(format!(
                "{} changed: digest {actual}, manifest says {expected}",
                f.path.display()
            )));
        }
    }
    Ok(m)
}

//! Workdir lock, stage manifests and content hashing.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";
const LOCK: &str = ".lock";

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> CliResult<String> {
    Ok(hash_bytes(&fs::read(path).map_err(|e| CliError::io(path, e))?))
}

/// Exclusive handle on a workdir; the lock file is removed on drop.
#[derive(Debug)]
pub struct Workdir {
    root: PathBuf,
}

impl Workdir {
    pub fn lock(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        let path = root.join(LOCK);
        if stale_lock(&path) {
            let _ = fs::remove_file(&path);
        }
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Workdir { root: root.to_owned() })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Locked(root.to_owned())),
            Err(e) => Err(CliError::io(&path, e)),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn stage_dir(&self, stage: &str) -> PathBuf {
        self.root.join(stage)
    }

    pub fn manifest(&self, stage: &str) -> CliResult<Option<StageManifest>> {
        let path = self.stage_dir(stage).join(MANIFEST);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        Ok(Some(serde_json::from_str(&text)?))
    }
}

/// True when the lock names a process that no longer exists. Only decidable
/// where `/proc` is mounted; elsewhere a lock is always respected.
fn stale_lock(path: &Path) -> bool {
    let Ok(text) = fs::read_to_string(path) else { return false };
    let Ok(pid) = text.trim().parse::<u32>() else { return false };
    let proc = Path::new("/proc");
    proc.join("self").exists() && !proc.join(pid.to_string()).exists()
}

impl Drop for Workdir {
    fn drop(&mut self) {
        let _ = fs::remove_file(self.root.join(LOCK));
    }
}

/// Written last by every stage. `input_hash` covers the stage's config
/// slice, seed, upstream outputs and external files; `outputs` maps each
/// artifact to its content hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub input_hash: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl StageManifest {
    /// Hash over all output hashes, used as an input by downstream stages.
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

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let path = dir.join(MANIFEST);
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| CliError::io(&path, e))
    }

    /// True when every recorded output still exists with its recorded hash.
    pub fn outputs_intact(&self, dir: &Path) -> bool {
        self.outputs.iter().all(|(name, h)| hash_file(&dir.join(name)).is_ok_and(|x| &x == h))
    }
}

/// Hashes every regular file in `dir` except the manifest.
pub fn hash_outputs(dir: &Path) -> CliResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let entry = entry.map_err(|e| CliError::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name == MANIFEST || !entry.path().is_file() {
            continue;
        }
        out.insert(name, hash_file(&entry.path())?);
    }
    Ok(out)
}

/// Combined input hash over named parts in key order.
pub fn combine(inputs: &BTreeMap<String, String>) -> String {
    let mut h = Sha256::new();
    for (k, v) in inputs {
        h.update(k.as_bytes());
        h.update([0]);
        h.update(v.as_bytes());
        h.update([0]);
    }
    hex::encode(h.finalize())
}

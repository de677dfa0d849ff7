use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::train::parse_reports;

pub const RUN_MANIFEST: &str = "run.json";
pub const LOCK_FILE: &str = ".lock";

/// Record of one command invocation, written when the command finishes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name, as given.
    pub args: Vec<String>,
    /// Directory relative paths in `args` resolve against.
    pub cwd: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_path: Option<PathBuf>,
    /// Resolved configuration, including command-line overrides.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    /// Seconds since the Unix epoch.
    pub started: f64,
    pub finished: f64,
    /// SHA-256 of each artifact, keyed by path relative to `out_dir`.
    pub artifacts: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            reason: e.to_string(),
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_atomic(&dir.join(RUN_MANIFEST), text.as_bytes())
    }
}

pub fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(dir.to_path_buf())),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// SHA-256 of a file. Metrics logs are hashed with wall-clock fields zeroed.
pub fn artifact_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    if path.extension().is_some_and(|e| e == "jsonl") {
        for r in parse_reports(&String::from_utf8_lossy(&bytes), path)? {
            h.update(serde_json::to_vec(&r.without_timing()).expect("report serializes"));
            h.update(b"\n");
        }
    } else {
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

/// Hashes of `files` (relative to `dir`); a directory entry hashes every
/// file below it, in sorted order.
pub fn hash_artifacts(dir: &Path, files: &[String]) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for f in files {
        let p = dir.join(f);
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(&p)
                .map_err(|e| Error::io(&p, e))?
                .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(&p, err)))
                .collect::<Result<_>>()?;
            entries.sort();
            let mut h = Sha256::new();
            for e in entries.iter().filter(|e| e.is_file()) {
                h.update(e.file_name().unwrap_or_default().to_string_lossy().as_bytes());
                h.update(artifact_hash(e)?.as_bytes());
            }
            out.insert(format!("{f}/"), hex::encode(h.finalize()));
        } else {
            out.insert(f.clone(), artifact_hash(&p)?);
        }
    }
    Ok(out)
}

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::Timestamp;

/// Per-attempt directory: `source/` for the checkout, `cache/` for
/// anything the build tool downloads or produces, `reports/` for test
/// reports. Nothing is shared between attempts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workspace {
    pub workspace_id: String,
    pub root: PathBuf,
    pub source_dir: PathBuf,
    pub dependency_cache_dir: PathBuf,
    pub reports_dir: PathBuf,
    pub env_pins: BTreeMap<String, String>,
    pub created_at: Timestamp,
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .take(40)
        .collect()
}

impl Workspace {
    /// Creates a fresh, uniquely named workspace under `parent`.
    pub fn create(parent: &Path, label: &str) -> io::Result<Workspace> {
        fs::create_dir_all(parent)?;
        let dir = tempfile::Builder::new()
            .prefix(&format!("{}-", sanitize(label)))
            .tempdir_in(parent)?
            .keep();
        let ws = Workspace {
            workspace_id: dir.file_name().unwrap().to_string_lossy().into_owned(),
            source_dir: dir.join("source"),
            dependency_cache_dir: dir.join("cache"),
            reports_dir: dir.join("reports"),
            root: dir,
            env_pins: BTreeMap::new(),
            created_at: Timestamp::now(),
        };
        fs::create_dir(&ws.dependency_cache_dir)?;
        fs::create_dir(&ws.reports_dir)?;
        Ok(ws)
    }

    pub fn remove(&self) -> io::Result<()> {
        match fs::remove_dir_all(&self.root) {
            Err(e) if e.kind() != io::ErrorKind::NotFound => Err(e),
            _ => Ok(()),
        }
    }

    /// Relative path to SHA-256 of every file in the source tree, skipping
    /// version-control metadata.
    pub fn source_manifest(&self) -> io::Result<BTreeMap<String, String>> {
        let mut out = BTreeMap::new();
        walk(&self.source_dir, &self.source_dir, &mut out)?;
        Ok(out)
    }
}

fn walk(base: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> io::Result<()> {
    if !dir.exists() {
        return Ok(());
    }
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let path = entry.path();
        if entry.file_name() == ".git" {
            continue;
        }
        if entry.file_type()?.is_dir() {
            walk(base, &path, out)?;
        } else {
            let rel = path.strip_prefix(base).unwrap().to_string_lossy().replace('\\', "/");
            out.insert(rel, hex::encode(Sha256::digest(fs::read(&path)?)));
        }
    }
    Ok(())
}

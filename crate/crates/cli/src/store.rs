//! Flat-file result store. Every file is written through a temporary file
//! and renamed into place, so an interrupted run leaves either the old
//! content or the new one.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// A stored value tagged with the hash of the spec that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub spec_hash: String,
    #[serde(flatten)]
    pub body: T,
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
    spec_hash: String,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>, spec_hash: impl Into<String>) -> anyhow::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self { root, spec_hash: spec_hash.into() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn spec_hash(&self) -> &str {
        &self.spec_hash
    }

    pub fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write_bytes(&self, rel: impl AsRef<Path>, bytes: &[u8]) -> anyhow::Result<PathBuf> {
        let path = self.path(rel);
        let dir = path.parent().unwrap_or(&self.root);
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(&path).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    /// Text output with a `# spec_hash=` first line.
    pub fn write_text(&self, rel: impl AsRef<Path>, body: &str) -> anyhow::Result<PathBuf> {
        let text = format!("# spec_hash={}\n{body}", self.spec_hash);
        self.write_bytes(rel, text.as_bytes())
    }

    pub fn write_json<T: Serialize>(&self, rel: impl AsRef<Path>, value: &T) -> anyhow::Result<PathBuf> {
        let stamped = Stamped { spec_hash: self.spec_hash.clone(), body: value };
        let mut bytes = serde_json::to_vec_pretty(&stamped)?;
        bytes.push(b'\n');
        self.write_bytes(rel, &bytes)
    }

    /// The stored value, if present and produced by the current spec.
    pub fn load_current<T: DeserializeOwned>(&self, rel: impl AsRef<Path>) -> Option<T> {
        let bytes = fs::read(self.path(rel)).ok()?;
        let s: Stamped<T> = serde_json::from_slice(&bytes).ok()?;
        (s.spec_hash == self.spec_hash).then_some(s.body)
    }

    /// Every stored value under `dir` (relative), regardless of the hash,
    /// sorted by file name.
    pub fn load_all<T: DeserializeOwned>(&self, dir: impl AsRef<Path>) -> anyhow::Result<Vec<Stamped<T>>> {
        let dir = self.path(dir);
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut paths: Vec<PathBuf> =
            fs::read_dir(&dir)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|x| x == "json")).collect();
        paths.sort();
        paths
            .iter()
            .map(|p| {
                let bytes = fs::read(p)?;
                serde_json::from_slice(&bytes).with_context(|| format!("reading {}", p.display()))
            })
            .collect()
    }
}

/// File-name friendly form of a platoon configuration (`-` becomes `_`).
pub fn config_file_stem(cfg: &str) -> String {
    cfg.replace('-', "_")
}

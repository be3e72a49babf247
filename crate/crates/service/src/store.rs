use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wiscon_core::detector::ModelCache;
use wiscon_core::{Error, Result};

use crate::config::SessionConfig;

const CONFIG_FILE: &str = "config.json";
const LABELS_FILE: &str = "labels.jsonl";

/// One line of a session's label log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub sample_index: usize,
    pub label: u8,
}

/// A persisted session: its config and the labels it received, in order.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredSession {
    pub id: String,
    pub config: SessionConfig,
    pub labels: Vec<LabelEntry>,
}

/// Directory-backed session log: `<root>/<id>/config.json` plus an
/// append-only `labels.jsonl`, and a score cache under `<root>/cache`.
#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    cache: ModelCache,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        let cache = ModelCache::new(root.join("cache"))?;
        Ok(Self { root, cache })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn cache(&self) -> &ModelCache {
        &self.cache
    }

    fn session_dir(&self, id: &str) -> PathBuf {
        self.root.join("sessions").join(id)
    }

    pub fn create(&self, id: &str, config: &SessionConfig) -> Result<()> {
        let dir = self.session_dir(id);
        fs::create_dir_all(&dir)?;
        let tmp = dir.join("config.json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(config)?)?;
        fs::rename(tmp, dir.join(CONFIG_FILE))?;
        File::create(dir.join(LABELS_FILE))?;
        Ok(())
    }

    pub fn append_label(&self, id: &str, entry: LabelEntry) -> Result<()> {
        let mut f = OpenOptions::new().append(true).open(self.session_dir(id).join(LABELS_FILE))?;
        let mut line = serde_json::to_vec(&entry)?;
        line.push(b'\n');
        f.write_all(&line)?;
        f.sync_data()?;
        Ok(())
    }

    /// Every complete session directory, sorted by id. A torn last line of a
    /// label log is ignored.
    pub fn load_all(&self) -> Result<Vec<StoredSession>> {
        let dir = self.root.join("sessions");
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            let config_path = path.join(CONFIG_FILE);
            if !config_path.is_file() {
                continue;
            }
            let id = path.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let config: SessionConfig = serde_json::from_slice(&fs::read(&config_path)?)?;
            let mut labels = Vec::new();
            if let Ok(f) = File::open(path.join(LABELS_FILE)) {
                for line in BufReader::new(f).lines() {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    match serde_json::from_str(&line) {
                        Ok(e) => labels.push(e),
                        Err(e) => {
                            log::warn!("session {id}: ignoring unreadable label line: {e}");
                            break;
                        }
                    }
                }
            }
            out.push(StoredSession { id, config, labels });
        }
        out.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(out)
    }
}

impl From<Error> for crate::session::SessionError {
    fn from(e: Error) -> Self {
        crate::session::SessionError::Internal(e)
    }
}

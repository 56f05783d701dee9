use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::prompt::PromptTemplate;
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct CacheLine {
    key: String,
    prompt_sha: String,
    completion: String,
}

/// Append-only JSONL store of completions keyed by (template, prompt).
#[derive(Debug)]
pub struct SummaryCache {
    path: Option<PathBuf>,
    entries: Mutex<HashMap<String, String>>,
}

pub fn cache_key(template: PromptTemplate, prompt: &str) -> String {
    let mut h = Sha256::new();
    h.update(template.name().as_bytes());
    h.update([0u8]);
    h.update(prompt.as_bytes());
    hex::encode(h.finalize())
}

impl SummaryCache {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            entries: Mutex::new(HashMap::new()),
        }
    }

    /// Opens (or creates on first write) the cache file. Later lines win.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mut entries = HashMap::new();
        if path.exists() {
            let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(&path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: CacheLine = serde_json::from_str(&line).map_err(|e| Error::Record {
                    line: i + 1,
                    message: format!("cache: {e}"),
                })?;
                entries.insert(rec.key, rec.completion);
            }
        }
        Ok(Self {
            path: Some(path),
            entries: Mutex::new(entries),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.entries.lock().expect("cache lock").get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, key: &str, prompt: &str, completion: &str) -> Result<()> {
        let mut entries = self.entries.lock().expect("cache lock");
        if let Some(path) = &self.path {
            let line = serde_json::to_string(&CacheLine {
                key: key.to_string(),
                prompt_sha: super::client::prompt_sha(prompt),
                completion: completion.to_string(),
            })?;
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| Error::io(path, e))?;
            writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
        }
        entries.insert(key.to_string(), completion.to_string());
        Ok(())
    }
}

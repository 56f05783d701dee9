//! `manifest.json`: per-command resolved configuration and output hashes.
//! No timestamps, so identical runs give identical manifests.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use viewflow::{Error, Result};

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub commands: BTreeMap<String, Entry>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Entry {
    pub config: serde_json::Value,
    pub args: serde_json::Value,
    /// Output file name (relative to the out dir) → sha256 hex.
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Records one command run, replacing any earlier entry for that command.
pub fn record(
    out: &Path,
    command: &str,
    config: serde_json::Value,
    args: serde_json::Value,
    outputs: &[&str],
) -> Result<()> {
    let path = out.join("manifest.json");
    // An unreadable manifest is rebuilt rather than fatal.
    let mut m: Manifest = std::fs::read(&path)
        .ok()
        .and_then(|b| serde_json::from_slice(&b).ok())
        .unwrap_or_default();
    let mut hashes = BTreeMap::new();
    for name in outputs {
        hashes.insert(name.to_string(), sha256_file(&out.join(name))?);
    }
    m.commands.insert(
        command.to_string(),
        Entry {
            config,
            args,
            outputs: hashes,
        },
    );
    let mut text = serde_json::to_string_pretty(&m)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

//! Run manifests: what was produced, from which scenario, with checksums.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use crate::export::write_json;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the output directory, with `/` separators.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    /// SHA-256 of the scenario file bytes.
    pub scenario_sha256: String,
    /// Command-line overrides applied on top of the scenario file.
    pub overrides: Vec<String>,
    pub seed: u64,
    /// RFC 3339; taken from `SOURCE_DATE_EPOCH` when set so that reruns are byte-identical.
    pub started: String,
    pub finished: String,
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Wall-clock time, or `SOURCE_DATE_EPOCH` if the environment pins it.
pub fn timestamp() -> String {
    let pinned = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|secs| chrono::DateTime::from_timestamp(secs, 0));
    pinned
        .unwrap_or_else(chrono::Utc::now)
        .to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

pub fn file_entry(out_dir: &Path, rel: &Path) -> CliResult<FileEntry> {
    let full = out_dir.join(rel);
    let bytes = std::fs::read(&full).map_err(|e| CliError::io(&full, e))?;
    Ok(FileEntry {
        path: rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/"),
        bytes: bytes.len() as u64,
        sha256: sha256_hex(&bytes),
    })
}

impl RunManifest {
    pub fn write(&self, out_dir: &Path) -> CliResult<()> {
        write_json(&out_dir.join(MANIFEST), self)
    }

    pub fn read(out_dir: &Path) -> CliResult<Self> {
        let path = out_dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Parse {
            path,
            message: e.to_string(),
        })
    }

    pub fn paths(&self) -> Vec<PathBuf> {
        self.files.iter().map(|f| PathBuf::from(&f.path)).collect()
    }
}

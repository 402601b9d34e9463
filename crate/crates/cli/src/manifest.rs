use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use neurocore::netfile::write_atomic;

/// Record of one command invocation and the files it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config_path: Option<PathBuf>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub status: String,
    /// file path -> hex SHA-256
    pub artifacts: BTreeMap<String, String>,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let bytes = fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

impl RunManifest {
    pub fn start(command: &str, args: Vec<String>) -> Self {
        Self {
            command: command.to_string(),
            args,
            config_path: None,
            seed: None,
            output: None,
            started_unix: now(),
            finished_unix: None,
            status: "running".into(),
            artifacts: BTreeMap::new(),
        }
    }

    pub fn add_artifact(&mut self, path: &Path) {
        if let Ok(h) = sha256_file(path) {
            self.artifacts.insert(path.display().to_string(), h);
        }
    }

    pub fn finish(&mut self, ok: bool) {
        self.finished_unix = Some(now());
        self.status = if ok { "ok" } else { "failed" }.into();
    }

    pub fn write(&self, path: &Path) -> Result<(), neurocore::netfile::NetFileError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }
}

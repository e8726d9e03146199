//! Output files and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("outputs are plain data");
        text.push('\n');
        self.write(name, &text)
    }

    /// Header plus rows; floats use the shortest representation that round-trips.
    pub fn csv(&mut self, name: &str, header: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<(), CliError> {
        let mut text = header.join(",");
        text.push('\n');
        for row in rows {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            text.push_str(&cells.join(","));
            text.push('\n');
        }
        self.write(name, &text)
    }

    fn write(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.root.join(name);
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub spec: String,
    /// SHA-256 of the spec bytes followed by every override, newline separated.
    pub input_sha256: String,
    pub overrides: Vec<String>,
    pub seed: u64,
    pub threads: usize,
    pub settings: serde_json::Value,
    pub outputs: Vec<String>,
    pub started_unix: u64,
    pub wall_time_s: f64,
}

pub fn input_hash(spec_bytes: &[u8], overrides: &[String]) -> String {
    let mut h = Sha256::new();
    h.update(spec_bytes);
    for o in overrides {
        h.update(b"\n");
        h.update(o.as_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

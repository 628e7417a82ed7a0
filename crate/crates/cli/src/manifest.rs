//! Output bookkeeping: every written file is hashed into `manifest.json`.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliResult, WithPath};

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub config: Value,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn read_input(path: &Path, inputs: &mut Vec<FileEntry>) -> CliResult<Vec<u8>> {
    let bytes = std::fs::read(path).at(path)?;
    inputs.push(FileEntry {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    });
    Ok(bytes)
}

pub fn read_input_text(path: &Path, inputs: &mut Vec<FileEntry>) -> CliResult<String> {
    let bytes = read_input(path, inputs)?;
    String::from_utf8(bytes).map_err(|_| crate::error::Failure::usage(format!("{}: not UTF-8 text", path.display())))
}

/// Writes files under one output directory and records their hashes.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<FileEntry>,
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(root).at(root)?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, relative: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.root.join(relative);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).at(parent)?;
        }
        std::fs::write(&path, bytes).at(&path)?;
        self.written.push(FileEntry {
            path: relative.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn finish(mut self, command: &str, seed: u64, config: Value, inputs: Vec<FileEntry>) -> CliResult<()> {
        let manifest = RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config,
            inputs,
            outputs: std::mem::take(&mut self.written),
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        let path = self.root.join("manifest.json");
        std::fs::write(&path, text + "\n").at(&path)
    }
}

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

impl FileEntry {
    fn of(path: String, contents: &[u8]) -> Self {
        Self {
            path,
            bytes: contents.len() as u64,
            sha256: hex::encode(Sha256::digest(contents)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: Option<String>,
    pub output_dir: String,
    pub seed: Option<u64>,
    pub started_at: String,
    pub finished_at: String,
    pub inputs: Vec<FileEntry>,
    /// Paths relative to `output_dir`.
    pub outputs: Vec<FileEntry>,
}

/// Writes files into one output directory and records them for the
/// manifest.
pub struct OutputWriter {
    dir: PathBuf,
    manifest: RunManifest,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl OutputWriter {
    pub fn create(dir: &Path, command: &str) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(format!("--output {}", dir.display()), e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest: RunManifest {
                tool: "qagg".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                command: command.into(),
                config: None,
                output_dir: dir.display().to_string(),
                seed: None,
                started_at: now(),
                finished_at: String::new(),
                inputs: Vec::new(),
                outputs: Vec::new(),
            },
        })
    }

    pub fn set_config(&mut self, path: &Path) {
        self.manifest.config = Some(path.display().to_string());
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.manifest.seed = Some(seed);
    }

    pub fn record_input(&mut self, path: &Path) -> CliResult<()> {
        let contents = fs::read(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        self.manifest
            .inputs
            .push(FileEntry::of(path.display().to_string(), &contents));
        Ok(())
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> CliResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
        self.manifest.outputs.push(FileEntry::of(name.into(), contents));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_vec_pretty(value).expect("serializable report");
        text.push(b'\n');
        self.write(name, &text)
    }

    pub fn finish(mut self) -> CliResult<RunManifest> {
        self.manifest.finished_at = now();
        let path = self.dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_vec_pretty(&self.manifest).expect("serializable manifest");
        text.push(b'\n');
        fs::write(&path, text).map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
        Ok(self.manifest)
    }
}

/// Recomputes every output checksum; returns the entries that differ.
pub fn verify(dir: &Path) -> CliResult<Vec<String>> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|e| CliError::input(MANIFEST_FILE, e))?;
    let mut bad = Vec::new();
    for entry in &manifest.outputs {
        match fs::read(dir.join(&entry.path)) {
            Ok(contents) if FileEntry::of(entry.path.clone(), &contents) == *entry => {}
            _ => bad.push(entry.path.clone()),
        }
    }
    Ok(bad)
}

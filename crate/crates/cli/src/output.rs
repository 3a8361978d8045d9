//! Per-run output directory with a replay manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG_ECHO: &str = "config.json";

/// Inputs read and files written by one command.
#[derive(Debug, Default)]
pub struct Run {
    command: String,
    out: Option<PathBuf>,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
    effective: BTreeMap<String, Value>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Run {
    pub fn new(command: &str, out: Option<PathBuf>) -> Self {
        Self {
            command: command.to_string(),
            out,
            ..Default::default()
        }
    }

    /// Output directory of a command that must write files.
    pub fn require_out(&self) -> Result<&Path, CliError> {
        self.out.as_deref().ok_or_else(|| {
            CliError::Validation(format!("`{}` writes files: pass --out <dir>", self.command))
        })
    }

    /// Records the digest of an input file (or of every file in a model
    /// directory).
    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        if path.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(path)
                .map_err(|e| CliError::io(path, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            entries.sort();
            for p in entries {
                self.inputs
                    .insert(p.display().to_string(), sha256_file(&p)?);
            }
        } else {
            self.inputs
                .insert(path.display().to_string(), sha256_file(path)?);
        }
        Ok(())
    }

    /// Resolved settings the command actually used.
    pub fn effective(&mut self, key: &str, value: impl Serialize) {
        self.effective.insert(
            key.to_string(),
            serde_json::to_value(value).expect("serializable settings"),
        );
    }

    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
        let dir = self.require_out()?.to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.outputs.push(name.to_string());
        Ok(path)
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("serializable report");
        text.push('\n');
        self.write(name, text)
    }

    /// Records files a library call wrote into a subdirectory of `--out`.
    pub fn wrote_dir(&mut self, name: &str) -> Result<PathBuf, CliError> {
        let dir = self.require_out()?.join(name);
        let mut files: Vec<String> = fs::read_dir(&dir)
            .map_err(|e| CliError::io(&dir, e))?
            .filter_map(|e| e.ok())
            .map(|e| format!("{name}/{}", e.file_name().to_string_lossy()))
            .collect();
        files.sort();
        self.outputs.extend(files);
        Ok(dir)
    }

    /// Writes the config echo and the manifest when an output directory
    /// was given.
    pub fn finish(mut self, config: &RunConfig) -> Result<(), CliError> {
        if self.out.is_none() {
            return Ok(());
        }
        self.write_json(CONFIG_ECHO, config)?;
        let manifest = json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": config.seed,
            "config": config,
            "effective": self.effective,
            "inputs": self.inputs,
            "outputs": self.outputs,
        });
        self.write_json(MANIFEST, &manifest)?;
        Ok(())
    }
}

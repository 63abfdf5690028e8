//! Output files and the per-command manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::Failure;

#[derive(Serialize)]
struct FileHash {
    path: PathBuf,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    config: &'a RunConfig,
    parameters: &'a serde_json::Value,
    inputs: Vec<FileHash>,
    outputs: Vec<FileHash>,
}

pub fn sha256_file(path: &Path) -> Result<String, Failure> {
    let bytes = fs::read(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Data)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn hashes(paths: &[PathBuf]) -> Result<Vec<FileHash>, Failure> {
    paths
        .iter()
        .map(|p| Ok(FileHash { path: p.clone(), sha256: sha256_file(p)? }))
        .collect()
}

/// Collects a command's outputs and writes `<command>.manifest.json` next to
/// them.
pub struct Artifacts<'a> {
    command: &'a str,
    config: &'a RunConfig,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl<'a> Artifacts<'a> {
    pub fn new(command: &'a str, config: &'a RunConfig) -> Result<Self, Failure> {
        fs::create_dir_all(&config.out)
            .with_context(|| format!("creating {}", config.out.display()))
            .map_err(Failure::Data)?;
        Ok(Self { command, config, inputs: Vec::new(), outputs: Vec::new() })
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    /// Writes `bytes` to `name` inside the output directory.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, Failure> {
        let path = self.config.path(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)
                .with_context(|| format!("creating {}", dir.display()))
                .map_err(Failure::Data)?;
        }
        fs::write(&path, bytes)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::Data)?;
        self.outputs.push(path.clone());
        Ok(path)
    }

    /// Records a file written elsewhere as an output.
    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn finish(self, parameters: serde_json::Value) -> Result<(), Failure> {
        let manifest = Manifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            config: self.config,
            parameters: &parameters,
            inputs: hashes(&self.inputs)?,
            outputs: hashes(&self.outputs)?,
        };
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Internal(e.into()))?;
        let path = self.config.path(&format!("{}.manifest.json", self.command));
        fs::write(&path, json + "\n")
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::Data)
    }
}

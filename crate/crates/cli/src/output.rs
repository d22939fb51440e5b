//! Output directory bookkeeping and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use meint::io::CsvTable;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

pub const MANIFEST_NAME: &str = "run_manifest.toml";
pub const CONFIG_NAME: &str = "config.toml";

/// Collects every file a run writes so the manifest can hash them.
pub struct Output {
    root: PathBuf,
    written: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Artifact {
    path: String,
    bytes: u64,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    output_dir: String,
    inputs: Vec<Artifact>,
    artifacts: Vec<Artifact>,
    config: &'a RunConfig,
}

impl Output {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::Io(format!("cannot create {}: {e}", root.display())))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Registers a file written by library code under this directory.
    pub fn record(&mut self, path: PathBuf) {
        if !self.written.contains(&path) {
            self.written.push(path);
        }
    }

    pub fn table(&mut self, rel: &str, table: &CsvTable) -> Result<(), CliError> {
        let path = self.path(rel);
        table.write(&path).map_err(|e| CliError::Io(e.to_string()))?;
        self.record(path);
        Ok(())
    }

    pub fn text(&mut self, rel: &str, text: &str) -> Result<(), CliError> {
        let path = self.path(rel);
        meint::io::write_text(&path, text).map_err(|e| CliError::Io(e.to_string()))?;
        self.record(path);
        Ok(())
    }

    /// Writes the resolved config as `config.toml` (accepted back by
    /// `--config`) and `run_manifest.toml`: command, seed, resolved config
    /// and the SHA-256 of every input and artifact.
    pub fn finish(mut self, command: &str, config: &RunConfig, inputs: &[PathBuf]) -> Result<PathBuf, CliError> {
        self.text(CONFIG_NAME, &config.to_toml())?;
        let mut artifacts = Vec::new();
        let mut sorted = self.written.clone();
        sorted.sort();
        for p in &sorted {
            artifacts.push(hash_file(p, Some(&self.root))?);
        }
        let inputs = inputs.iter().map(|p| hash_file(p, None)).collect::<Result<Vec<_>, _>>()?;
        let manifest = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed: config.seed,
            output_dir: self.root.display().to_string(),
            inputs,
            artifacts,
            config,
        };
        let text = toml::to_string(&manifest).map_err(|e| CliError::Io(format!("run manifest: {e}")))?;
        let path = self.root.join(MANIFEST_NAME);
        meint::io::write_text(&path, &text).map_err(|e| CliError::Io(e.to_string()))?;
        Ok(path)
    }
}

fn hash_file(path: &Path, base: Option<&Path>) -> Result<Artifact, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    let digest = Sha256::digest(&bytes);
    let shown = match base.and_then(|b| path.strip_prefix(b).ok()) {
        Some(rel) => rel.to_string_lossy().replace('\\', "/"),
        None => path.display().to_string(),
    };
    Ok(Artifact {
        path: shown,
        bytes: bytes.len() as u64,
        sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
    })
}

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Written as `manifest.json` next to the outputs of every command.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub seed: Option<u64>,
    /// SHA-256 of the resolved command configuration as JSON.
    pub config_digest: String,
    pub version: String,
    pub duration_seconds: f64,
}

pub struct Run {
    manifest: RunManifest,
    dir: PathBuf,
    started: Instant,
}

impl Run {
    pub fn start(command: &str, dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Run {
            manifest: RunManifest {
                command: command.to_string(),
                inputs: Vec::new(),
                outputs: Vec::new(),
                seed: None,
                config_digest: String::new(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                duration_seconds: 0.0,
            },
            dir: dir.to_path_buf(),
            started: Instant::now(),
        })
    }

    pub fn input(&mut self, path: &Path) {
        self.manifest.inputs.push(path.display().to_string());
    }

    pub fn seed(&mut self, seed: u64) {
        self.manifest.seed = Some(seed);
    }

    pub fn config<T: Serialize + ?Sized>(&mut self, config: &T) {
        let json = serde_json::to_vec(config).expect("config serializes");
        self.manifest.config_digest = hex::encode(Sha256::digest(&json));
    }

    /// Registers an output file and returns its path.
    pub fn output(&mut self, name: &str) -> PathBuf {
        let path = self.dir.join(name);
        self.manifest.outputs.push(path.display().to_string());
        path
    }

    pub fn finish(mut self) -> Result<()> {
        self.manifest.duration_seconds = self.started.elapsed().as_secs_f64();
        let path = self.dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&self.manifest)? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }
}

//! `run.json` records written next to every command's artifacts.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, Serialize)]
pub struct Versions {
    pub lyricsep: &'static str,
    pub checkpoint_format: u8,
}

impl Default for Versions {
    fn default() -> Self {
        Versions {
            lyricsep: env!("CARGO_PKG_VERSION"),
            checkpoint_format: lyricsep::checkpoint::VERSION,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunRecord {
    pub command: String,
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
    pub threads: usize,
    pub versions: Versions,
    pub inputs: Vec<InputFile>,
    /// File names relative to the output directory.
    pub artifacts: Vec<String>,
    pub warnings: Vec<String>,
}

impl RunRecord {
    pub fn new(command: &str, threads: usize) -> Self {
        RunRecord {
            command: command.to_string(),
            config_hash: None,
            seed: None,
            threads,
            versions: Versions::default(),
            inputs: Vec::new(),
            artifacts: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.push(InputFile {
            path: path.to_path_buf(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(())
    }

    /// Writes `contents` to `out/name` and records it.
    pub fn write(&mut self, out: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = out.join(name);
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    pub fn warn(&mut self, msgs: impl IntoIterator<Item = String>) {
        for m in msgs {
            log::warn!("{m}");
            if !self.warnings.contains(&m) {
                self.warnings.push(m);
            }
        }
    }

    pub fn finish(&self, out: &Path) -> Result<()> {
        let path = out.join("run.json");
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

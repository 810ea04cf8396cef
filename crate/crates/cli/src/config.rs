//! Experiment configuration files.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lyricsep::eval::EvalOptions;
use lyricsep::model::ModelSpec;
use lyricsep::training::{derive_seed, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// JSON schema of [`ExperimentConfig`], shipped with the binary.
pub const SCHEMA: &str = include_str!("../schema/experiment.schema.json");

/// One file fully determines a training, evaluation or ablation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Dataset manifest; relative paths are resolved against the config file.
    pub manifest: PathBuf,
    pub model: ModelSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalOptions,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    /// The only source of randomness; `train.seed` is overwritten from it.
    #[serde(default)]
    pub seed: u64,
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

/// Parses JSON, reporting the field path of the first schema violation.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        anyhow::anyhow!("schema error at `{path}`: {}", e.into_inner())
    })
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: ExperimentConfig = parse_json(&text).with_context(|| format!("in {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.manifest, &mut cfg.out_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.train.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies `--seed` and `--out` overrides.
    pub fn with_overrides(mut self, seed: Option<u64>, out: Option<&Path>) -> Self {
        if let Some(s) = seed {
            self.seed = s;
            self.train.seed = s;
        }
        if let Some(o) = out {
            self.out_dir = o.to_path_buf();
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.eval.validate()?;
        if self.train.seed != self.seed {
            bail!("train.seed ({}) differs from seed ({})", self.train.seed, self.seed);
        }
        Ok(())
    }

    /// Seed for parameter initialisation.
    pub fn init_seed(&self) -> u64 {
        derive_seed(&[self.seed, 100])
    }

    /// Seed for corrupted-lyrics runs.
    pub fn ablation_seed(&self) -> u64 {
        derive_seed(&[self.seed, 101])
    }

    /// SHA-256 of the resolved configuration, output directory excluded.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(o) = v.as_object_mut() {
            o.remove("out_dir");
        }
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }
}

//! Incorrect-lyrics ablation on a trained lyrics model.

use serde::{Deserialize, Serialize};

use super::{aggregate, median, run_jobs, Aggregation, EvalOptions, Job, Metrics, TestTrack};
use crate::error::{Error, Result};
use crate::lyrics::Corruption;
use crate::model::{InputMode, ModelBundle};
use crate::training::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LyricsMode {
    Zero,
    Random,
    VaRandom,
    /// The aligned lyrics, unchanged.
    Lyrics,
}

impl LyricsMode {
    pub const ALL: [LyricsMode; 4] = [LyricsMode::Lyrics, LyricsMode::VaRandom, LyricsMode::Random, LyricsMode::Zero];

    pub fn corruption(self) -> Option<Corruption> {
        match self {
            LyricsMode::Zero => Some(Corruption::Zero),
            LyricsMode::Random => Some(Corruption::Random),
            LyricsMode::VaRandom => Some(Corruption::VaRandom),
            LyricsMode::Lyrics => None,
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, LyricsMode::Random | LyricsMode::VaRandom)
    }

    pub fn tag(self) -> &'static str {
        match self {
            LyricsMode::Zero => "zero",
            LyricsMode::Random => "random",
            LyricsMode::VaRandom => "va-random",
            LyricsMode::Lyrics => "lyrics",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| Error::Config(format!("unknown lyrics mode `{s}` (zero, random, va-random, lyrics)")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub mode: LyricsMode,
    /// Per-metric median over runs of the median-of-medians scores.
    pub median: Metrics,
    pub runs: Vec<Metrics>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationTable {
    pub model: String,
    pub rows: Vec<AblationRow>,
    pub warnings: Vec<String>,
}

impl AblationTable {
    pub fn row(&self, mode: LyricsMode) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.mode == mode)
    }
}

/// Stochastic modes run `opts.ablation_seeds` times; the others once.
pub fn ablate(model: &ModelBundle, tracks: &[TestTrack], modes: &[LyricsMode], opts: &EvalOptions, seed: u64, threads: usize) -> Result<AblationTable> {
    if model.spec.input_mode != InputMode::Lyrics {
        return Err(Error::Variant(format!(
            "the ablation needs a model trained on aligned lyrics, got `{}`",
            model.spec.tag()
        )));
    }
    let mut jobs = Vec::new();
    let mut owner = Vec::new();
    for (k, &mode) in modes.iter().enumerate() {
        let runs = if mode.is_stochastic() { opts.ablation_seeds } else { 1 };
        for run in 0..runs {
            jobs.push(Job {
                model,
                mode,
                seed: derive_seed(&[seed, 21, k as u64, run as u64]),
            });
            owner.push(k);
        }
    }
    let results = run_jobs(tracks, &jobs, opts.filter_len, threads)?;
    let mut runs: Vec<Vec<Metrics>> = vec![Vec::new(); modes.len()];
    let mut warnings = Vec::new();
    for (k, r) in owner.into_iter().zip(results) {
        let (m, w) = aggregate(&r.tracks, Aggregation::Median)?;
        runs[k].push(m);
        warnings.extend(w);
    }
    warnings.dedup();
    let rows = modes
        .iter()
        .zip(runs)
        .map(|(&mode, runs)| {
            let pick = |f: fn(&Metrics) -> f64| median(&runs.iter().map(f).collect::<Vec<_>>());
            AblationRow {
                mode,
                median: Metrics {
                    sdr: pick(|m| m.sdr),
                    sir: pick(|m| m.sir),
                    sar: pick(|m| m.sar),
                },
                runs,
            }
        })
        .collect();
    Ok(AblationTable {
        model: model.spec.tag(),
        rows,
        warnings,
    })
}

/// `model,input,sdr,sir,sar`
pub fn ablation_csv(tables: &[AblationTable]) -> String {
    let mut s = String::from("model,input,sdr,sir,sar\n");
    for t in tables {
        for r in &t.rows {
            let m = &r.median;
            s += &format!("{},{},{:.6},{:.6},{:.6}\n", t.model, r.mode.tag(), m.sdr, m.sir, m.sar);
        }
    }
    s
}

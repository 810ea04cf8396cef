//! Random-mix batch sampling, loss, learning-rate schedule and the fit loop.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::checkpoint;
use crate::dataset::{Dataset, Split};
use crate::dsp::{samples_for_frames, stft, AudioClip, SpecData, BINS, HOP, WINDOW};
use rustfft::num_complex::Complex32;
use crate::error::{Error, Result};
use crate::lyrics::FrameLabels;
use crate::model::ModelBundle;
use crate::nn::BnUpdates;
use crate::optim::{Adam, OptimizerConfig};
use crate::tensor::Tensor;

pub use crate::model::{build_conditioning_input, InputMode};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub excerpt_frames: usize,
    pub batches_per_epoch: usize,
    pub max_epochs: usize,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub early_stop_patience: usize,
    /// Accompaniment gain range for random mixing.
    pub gain_range: [f64; 2],
    /// Validation excerpts taken per validation track.
    pub validation_excerpts: usize,
    /// Batches drawn to initialise the input and output scalers.
    pub scaler_batches: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            excerpt_frames: 256,
            batches_per_epoch: 64,
            max_epochs: 500,
            plateau_patience: 25,
            plateau_factor: 0.3,
            early_stop_patience: 50,
            gain_range: [0.5, 1.0],
            validation_excerpts: 4,
            scaler_batches: 8,
            optimizer: OptimizerConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 || self.excerpt_frames == 0 || self.batches_per_epoch == 0 {
            return bad("batch_size, excerpt_frames and batches_per_epoch must be positive");
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return bad("plateau_factor must lie in (0, 1)");
        }
        if self.early_stop_patience < self.plateau_patience {
            return bad("early_stop_patience must be at least plateau_patience");
        }
        let [lo, hi] = self.gain_range;
        if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
            return bad("gain_range must be 0 <= lo <= hi");
        }
        self.optimizer.validate()
    }

    /// Gain used for validation and evaluation mixtures.
    pub fn fixed_gain(&self) -> f64 {
        0.5 * (self.gain_range[0] + self.gain_range[1])
    }
}

/// splitmix64 over the combined key; decorrelates neighbouring seeds.
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut z = 0x9e37_79b9_7f4a_7c15u64;
    for &p in parts {
        z = z.wrapping_add(p).wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}

const STREAM_BATCH: u64 = 1;
const STREAM_DROPOUT: u64 = 2;
const STREAM_SCALER: u64 = 3;
const STREAM_VALIDATION: u64 = 4;

/// One training example before the STFT.
#[derive(Clone, Debug)]
pub struct Excerpt {
    pub vocal: AudioClip,
    pub accompaniment: AudioClip,
    pub gain: f64,
    pub labels: FrameLabels,
}

impl Excerpt {
    pub fn mixture(&self) -> AudioClip {
        AudioClip::new(
            self.vocal
                .samples
                .iter()
                .zip(&self.accompaniment.samples)
                .map(|(v, a)| v + self.gain * a)
                .collect(),
        )
    }
}

/// `[B, 513, T]` magnitudes plus `B * T` labels, batch-major.
#[derive(Clone, Debug)]
pub struct Batch {
    pub mix: Tensor,
    pub vocal: Tensor,
    pub labels: Vec<FrameLabels>,
}

impl Batch {
    pub fn from_excerpts(items: &[Excerpt]) -> Result<Self> {
        let t = items.first().map(|e| e.labels.len()).unwrap_or(0);
        let mut mix = Vec::with_capacity(items.len() * BINS * t);
        let mut vocal = Vec::with_capacity(items.len() * BINS * t);
        for e in items {
            let m = stft(&e.mixture())?;
            let v = stft(&e.vocal)?;
            if m.frames != t || e.labels.len() != t {
                return Err(Error::dim("batch excerpt", &[t], &[m.frames, e.labels.len()]));
            }
            mix.extend(m.magnitudes());
            vocal.extend(v.magnitudes());
        }
        let shape = [items.len(), BINS, t];
        Ok(Batch {
            mix: Tensor::new(&shape, mix)?,
            vocal: Tensor::new(&shape, vocal)?,
            labels: items.iter().map(|e| e.labels.clone()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Conditioning IDs for the model's input mode, concatenated over items.
    pub fn conditioning(&self, mode: InputMode) -> Result<Option<Vec<usize>>> {
        let mut ids = Vec::new();
        for l in &self.labels {
            match build_conditioning_input(mode, Some(l), l.len())? {
                Some(c) => ids.extend(c.ids),
                None => return Ok(None),
            }
        }
        Ok(Some(ids))
    }
}

/// Indices of one random-mix excerpt into a [`Dataset`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExcerptPlan {
    pub vocal: usize,
    pub start_frame: usize,
    pub accompaniment: usize,
    /// Accompaniment offset in hops, so its frames line up with the vocal's.
    pub acc_frame: usize,
    pub gain: f64,
}

/// Draws one random-mix excerpt: singer uniformly, then one of their songs,
/// then a frame-aligned excerpt, plus an independent accompaniment excerpt.
pub fn plan_excerpt(data: &Dataset, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<ExcerptPlan> {
    let t = cfg.excerpt_frames;
    let singers = data.singers(Split::Train);
    if singers.is_empty() {
        return Err(Error::Dataset("no training vocals".into()));
    }
    let accs: Vec<usize> = (0..data.accompaniments.len())
        .filter(|&k| {
            let a = &data.accompaniments[k];
            a.split == Split::Train && a.audio.n_frames() >= t
        })
        .collect();
    if accs.is_empty() {
        return Err(Error::Dataset(format!("no training accompaniment of at least {t} frames")));
    }
    let singer = &singers[rng.gen_range(0..singers.len())];
    let mut songs: Vec<usize> = (0..data.vocals.len())
        .filter(|&k| data.vocals[k].split == Split::Train && &data.vocals[k].singer == singer)
        .collect();
    let song = loop {
        if songs.is_empty() {
            return Err(Error::Dataset(format!("singer {singer} has no song of at least {t} frames")));
        }
        let k = rng.gen_range(0..songs.len());
        if data.vocals[songs[k]].labels.len() >= t {
            break songs[k];
        }
        songs.swap_remove(k);
    };
    let start_frame = rng.gen_range(0..=data.vocals[song].labels.len() - t);
    let acc = accs[rng.gen_range(0..accs.len())];
    let acc_frame = rng.gen_range(0..=data.accompaniments[acc].audio.n_frames() - t);
    let [lo, hi] = cfg.gain_range;
    let gain = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
    Ok(ExcerptPlan {
        vocal: song,
        start_frame,
        accompaniment: acc,
        acc_frame,
        gain,
    })
}

impl ExcerptPlan {
    pub fn excerpt(&self, data: &Dataset, frames: usize) -> Result<Excerpt> {
        let n = samples_for_frames(frames);
        let song = &data.vocals[self.vocal];
        Ok(Excerpt {
            vocal: song.audio.slice(self.start_frame * HOP, n)?,
            accompaniment: data.accompaniments[self.accompaniment].audio.slice(self.acc_frame * HOP, n)?,
            gain: self.gain,
            labels: song.labels.slice(self.start_frame, frames),
        })
    }
}

pub fn sample_excerpt(data: &Dataset, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<Excerpt> {
    plan_excerpt(data, cfg, rng)?.excerpt(data, cfg.excerpt_frames)
}

fn item_rng(cfg: &TrainConfig, epoch: u64, index: u64, item: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(&[cfg.seed, STREAM_BATCH, epoch, index, item]))
}

/// Batch `index` of `epoch`; each item has its own seed so batches are
/// reproducible independently of each other.
pub fn sample_batch(data: &Dataset, cfg: &TrainConfig, epoch: u64, index: u64) -> Result<Batch> {
    let items = (0..cfg.batch_size as u64)
        .map(|item| sample_excerpt(data, cfg, &mut item_rng(cfg, epoch, index, item)))
        .collect::<Result<Vec<_>>>()?;
    Batch::from_excerpts(&items)
}

/// Complex STFTs of the training tracks (single precision), so batches are
/// slices instead of fresh transforms. Mixture spectra follow from linearity.
pub struct SpectraCache {
    vocals: Vec<Option<CachedSpec>>,
    accompaniments: Vec<Option<CachedSpec>>,
}

struct CachedSpec {
    frames: usize,
    data: Vec<Complex32>,
}

impl CachedSpec {
    fn new(clip: &AudioClip) -> Result<Self> {
        let s = stft(clip)?;
        let SpecData::Complex(c) = &s.data else {
            unreachable!("stft returns complex data")
        };
        Ok(CachedSpec {
            frames: s.frames,
            data: c.iter().map(|z| Complex32::new(z.re as f32, z.im as f32)).collect(),
        })
    }
}

impl SpectraCache {
    pub fn new(data: &Dataset) -> Result<Self> {
        let vocals = data
            .vocals
            .iter()
            .map(|v| (v.split == Split::Train && v.audio.len() >= WINDOW).then(|| CachedSpec::new(&v.audio)).transpose())
            .collect::<Result<_>>()?;
        let accompaniments = data
            .accompaniments
            .iter()
            .map(|a| (a.split == Split::Train && a.audio.len() >= WINDOW).then(|| CachedSpec::new(&a.audio)).transpose())
            .collect::<Result<_>>()?;
        Ok(SpectraCache { vocals, accompaniments })
    }

    /// Appends the mixture and vocal magnitudes of `plan` (bin-major).
    fn extend(&self, plan: &ExcerptPlan, frames: usize, mix: &mut Vec<f64>, vocal: &mut Vec<f64>) -> Result<()> {
        let missing = || Error::Dataset("track is not in the training cache".into());
        let v = self.vocals[plan.vocal].as_ref().ok_or_else(missing)?;
        let a = self.accompaniments[plan.accompaniment].as_ref().ok_or_else(missing)?;
        let g = plan.gain as f32;
        for f in 0..BINS {
            let vrow = &v.data[f * v.frames + plan.start_frame..][..frames];
            let arow = &a.data[f * a.frames + plan.acc_frame..][..frames];
            for (x, y) in vrow.iter().zip(arow) {
                mix.push(f64::from((x + y * g).norm()));
                vocal.push(f64::from(x.norm()));
            }
        }
        Ok(())
    }
}

/// As [`sample_batch`], reading spectra from `cache`.
pub fn sample_batch_cached(data: &Dataset, cache: &SpectraCache, cfg: &TrainConfig, epoch: u64, index: u64) -> Result<Batch> {
    let t = cfg.excerpt_frames;
    let mut mix = Vec::with_capacity(cfg.batch_size * BINS * t);
    let mut vocal = Vec::with_capacity(cfg.batch_size * BINS * t);
    let mut labels = Vec::with_capacity(cfg.batch_size);
    for item in 0..cfg.batch_size as u64 {
        let plan = plan_excerpt(data, cfg, &mut item_rng(cfg, epoch, index, item))?;
        cache.extend(&plan, t, &mut mix, &mut vocal)?;
        labels.push(data.vocals[plan.vocal].labels.slice(plan.start_frame, t));
    }
    let shape = [cfg.batch_size, BINS, t];
    Ok(Batch {
        mix: Tensor::new(&shape, mix)?,
        vocal: Tensor::new(&shape, vocal)?,
        labels,
    })
}

/// Fixed validation excerpts: consecutive non-overlapping windows of each
/// validation vocal, mixed at the fixed gain with a seeded accompaniment slice.
pub fn validation_batches(data: &Dataset, cfg: &TrainConfig) -> Result<Vec<Batch>> {
    let n = samples_for_frames(cfg.excerpt_frames);
    let accs: Vec<_> = data
        .accompaniments_in(Split::Validation)
        .filter(|a| a.audio.len() >= n)
        .collect();
    if accs.is_empty() {
        return Err(Error::Dataset("no validation accompaniment long enough".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[cfg.seed, STREAM_VALIDATION]));
    let mut items = Vec::new();
    for v in data.vocals_in(Split::Validation) {
        let fits = v.labels.len() / cfg.excerpt_frames;
        for k in 0..fits.min(cfg.validation_excerpts) {
            let acc = accs[items.len() % accs.len()];
            let acc_start = rng.gen_range(0..=acc.audio.len() - n);
            let start = k * cfg.excerpt_frames;
            items.push(Excerpt {
                vocal: v.audio.slice(start * HOP, n)?,
                accompaniment: acc.audio.slice(acc_start, n)?,
                gain: cfg.fixed_gain(),
                labels: v.labels.slice(start, cfg.excerpt_frames),
            });
        }
    }
    if items.is_empty() {
        return Err(Error::Dataset(format!(
            "no validation vocal of at least {} frames",
            cfg.excerpt_frames
        )));
    }
    items.chunks(cfg.batch_size).map(Batch::from_excerpts).collect()
}

/// Mean of squared entrywise differences.
pub fn mse_loss(estimate: &Tensor, target: &Tensor) -> Result<f64> {
    if estimate.shape() != target.shape() {
        return Err(Error::dim("mse_loss", estimate.shape(), target.shape()));
    }
    let n = estimate.numel().max(1) as f64;
    Ok(estimate
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// Per-channel mean and standard deviation of `[B, C, T]` tensors.
fn channel_stats(batches: &[&Tensor]) -> (Vec<f64>, Vec<f64>) {
    let c = batches[0].shape()[1];
    let mut sum = vec![0.0; c];
    let mut sq = vec![0.0; c];
    let mut n = 0.0;
    for t in batches {
        let (b, tt) = (t.shape()[0], t.shape()[2]);
        for bi in 0..b {
            for ci in 0..c {
                for v in &t.data()[(bi * c + ci) * tt..][..tt] {
                    sum[ci] += v;
                    sq[ci] += v * v;
                }
            }
        }
        n += (b * tt) as f64;
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std = sq
        .iter()
        .zip(&mean)
        .map(|(s, m)| (s / n - m * m).max(0.0).sqrt())
        .collect();
    (mean, std)
}

/// Sets the input scaler to standardise mixture magnitudes and the output
/// scaler to the vocal magnitude mean and spread, per frequency.
pub fn init_scalers(model: &mut ModelBundle, data: &Dataset, cfg: &TrainConfig) -> Result<()> {
    let batches = (0..cfg.scaler_batches.max(1) as u64)
        .map(|k| sample_batch(data, &TrainConfig { seed: derive_seed(&[cfg.seed, STREAM_SCALER]), ..cfg.clone() }, 0, k))
        .collect::<Result<Vec<_>>>()?;
    let (mix_mean, mix_std) = channel_stats(&batches.iter().map(|b| &b.mix).collect::<Vec<_>>());
    let (voc_mean, voc_std) = channel_stats(&batches.iter().map(|b| &b.vocal).collect::<Vec<_>>());
    let floor = 1e-6 * mix_std.iter().cloned().fold(0.0, f64::max).max(1e-12);
    let shift: Vec<f64> = mix_mean.iter().map(|m| -m).collect();
    let scale: Vec<f64> = mix_std.iter().map(|s| 1.0 / s.max(floor)).collect();
    let sep = &model.separator;
    sep.input_scaler.set(&mut model.store, &shift, &scale)?;
    sep.output_scaler.set(&mut model.store, &voc_mean, &voc_std)?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Decision {
    Continue,
    /// Learning rate reduced to the contained value.
    Reduce(f64),
    Stop,
}

/// Plateau learning-rate reduction and early stopping, driven only by the
/// validation-loss sequence.
///
/// "No decrease" means no new strict minimum. Both counters reset on a new
/// minimum; the plateau counter also resets after each reduction.
#[derive(Clone, Debug)]
pub struct PlateauSchedule {
    pub lr: f64,
    factor: f64,
    plateau_patience: usize,
    early_stop_patience: usize,
    best: f64,
    since_best: usize,
    since_reduce: usize,
}

impl PlateauSchedule {
    pub fn new(cfg: &TrainConfig) -> Self {
        PlateauSchedule {
            lr: cfg.optimizer.learning_rate,
            factor: cfg.plateau_factor,
            plateau_patience: cfg.plateau_patience,
            early_stop_patience: cfg.early_stop_patience,
            best: f64::INFINITY,
            since_best: 0,
            since_reduce: 0,
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    /// Returns whether `val_loss` is a new minimum, and what to do next.
    pub fn observe(&mut self, val_loss: f64) -> (bool, Decision) {
        if val_loss < self.best {
            self.best = val_loss;
            self.since_best = 0;
            self.since_reduce = 0;
            return (true, Decision::Continue);
        }
        self.since_best += 1;
        self.since_reduce += 1;
        if self.since_best >= self.early_stop_patience {
            return (false, Decision::Stop);
        }
        if self.since_reduce >= self.plateau_patience {
            self.since_reduce = 0;
            self.lr *= self.factor;
            return (false, Decision::Reduce(self.lr));
        }
        (false, Decision::Continue)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Learning rate used during the epoch.
    pub lr: f64,
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,train_loss,val_loss,lr\n");
    for r in history {
        let _ = writeln!(s, "{},{},{},{}", r.epoch, r.train_loss, r.val_loss, r.lr);
    }
    s
}

#[derive(Clone, Debug)]
pub struct FitReport {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    pub warnings: Vec<String>,
    /// Optimizer state at the best epoch.
    pub optimizer: Adam,
}

/// Validation loss: item-weighted mean MSE in eval mode.
pub fn validation_loss(model: &ModelBundle, batches: &[Batch]) -> Result<f64> {
    let mut total = 0.0;
    let mut items = 0;
    for b in batches {
        let mut g = Graph::eval();
        let x = g.input(&b.mix);
        let cond = b.conditioning(model.spec.input_mode)?;
        let y = model.forward(&mut g, &model.store, x, cond.as_deref(), &mut BnUpdates::new())?;
        let t = g.input(&b.vocal);
        let loss = g.mse(y, t)?;
        total += g.scalar(loss) * b.len() as f64;
        items += b.len();
    }
    Ok(total / items.max(1) as f64)
}

/// Trains `model` in place and leaves it at the best-validation weights.
/// With `out_dir`, writes `history.csv` and `model.ckpt` there, or
/// `diagnostic.ckpt` if the loss becomes non-finite.
pub fn fit(model: &mut ModelBundle, data: &Dataset, cfg: &TrainConfig, out_dir: Option<&Path>) -> Result<FitReport> {
    cfg.validate()?;
    if model.spec.separator.freq_bins != BINS {
        return Err(Error::Config(format!(
            "training on audio needs freq_bins = {BINS}, model has {}",
            model.spec.separator.freq_bins
        )));
    }
    if model.spec.input_mode == InputMode::Lyrics && model.vocabulary.as_ref() != Some(&data.vocabulary) {
        return Err(Error::Config("model vocabulary differs from the dataset vocabulary".into()));
    }
    let mut warnings = data.warnings.clone();
    init_scalers(model, data, cfg)?;
    let cache = SpectraCache::new(data)?;
    let val = validation_batches(data, cfg)?;
    let mut adam = Adam::new(cfg.optimizer.clone(), &model.store)?;
    let mut schedule = PlateauSchedule::new(cfg);
    let mut history = Vec::new();
    let mut best = (0, model.store.snapshot(), adam.clone());
    let mut stopped_early = false;
    for epoch in 1..=cfg.max_epochs {
        let lr = adam.lr;
        let mut train_total = 0.0;
        for k in 0..cfg.batches_per_epoch as u64 {
            let batch = sample_batch_cached(data, &cache, cfg, epoch as u64, k)?;
            let mut g = Graph::train(derive_seed(&[cfg.seed, STREAM_DROPOUT, epoch as u64, k]));
            let x = g.input(&batch.mix);
            let cond = batch.conditioning(model.spec.input_mode)?;
            let mut bn = BnUpdates::new();
            let y = model.forward(&mut g, &model.store, x, cond.as_deref(), &mut bn)?;
            let t = g.input(&batch.vocal);
            let loss = g.mse(y, t)?;
            let value = g.scalar(loss);
            if !value.is_finite() {
                if let Some(dir) = out_dir {
                    checkpoint::save(&dir.join("diagnostic.ckpt"), model, Some(&adam), epoch as u64)?;
                }
                return Err(Error::NonFinite(format!("training loss at epoch {epoch}, batch {k}")));
            }
            train_total += value;
            g.backward(loss)?;
            model.store.zero_grads();
            g.accumulate_param_grads(&mut model.store)?;
            adam.step(&mut model.store)?;
            bn.apply(&mut model.store);
        }
        let val_loss = validation_loss(model, &val)?;
        if !val_loss.is_finite() {
            if let Some(dir) = out_dir {
                checkpoint::save(&dir.join("diagnostic.ckpt"), model, Some(&adam), epoch as u64)?;
            }
            return Err(Error::NonFinite(format!("validation loss at epoch {epoch}")));
        }
        history.push(EpochRecord {
            epoch,
            train_loss: train_total / cfg.batches_per_epoch as f64,
            val_loss,
            lr,
        });
        log::info!(
            "{} epoch {epoch}: train {:.6} val {val_loss:.6} lr {lr}",
            model.spec.tag(),
            train_total / cfg.batches_per_epoch as f64
        );
        let (improved, decision) = schedule.observe(val_loss);
        if improved {
            best = (epoch, model.store.snapshot(), adam.clone());
        }
        match decision {
            Decision::Continue => {}
            Decision::Reduce(new_lr) => adam.lr = new_lr,
            Decision::Stop => {
                stopped_early = true;
                break;
            }
        }
    }
    let (best_epoch, weights, best_adam) = best;
    if best_epoch == 0 {
        warnings.push("no epoch completed; weights left at initialisation".into());
    }
    model.store.restore(&weights);
    model.store.zero_grads();
    if let Some(dir) = out_dir {
        std::fs::write(dir.join("history.csv"), history_csv(&history)).map_err(|e| Error::io(dir.join("history.csv"), e))?;
        checkpoint::save(&dir.join("model.ckpt"), model, Some(&best_adam), best_epoch as u64)?;
    }
    Ok(FitReport {
        best_val_loss: schedule.best(),
        history,
        best_epoch,
        stopped_early,
        warnings,
        optimizer: best_adam,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn schedule_trace(losses: &[f64]) -> (Vec<(usize, f64)>, Option<usize>) {
        let cfg = TrainConfig::default();
        let mut s = PlateauSchedule::new(&cfg);
        let mut reductions = Vec::new();
        for (k, &l) in losses.iter().enumerate() {
            match s.observe(l).1 {
                Decision::Reduce(lr) => reductions.push((k + 1, lr)),
                Decision::Stop => return (reductions, Some(k + 1)),
                Decision::Continue => {}
            }
        }
        (reductions, None)
    }

    #[test]
    fn cached_batches_match_audio_batches() {
        let dir = tempfile::tempdir().unwrap();
        let spec = crate::synthdata::SynthSpec {
            n_singers: 2,
            songs_per_singer: 3,
            song_seconds: 4.0,
            n_accompaniments: 3,
            ..Default::default()
        };
        crate::synthdata::generate(&spec, dir.path(), 1).unwrap();
        let data = Dataset::load(&dir.path().join("manifest.json")).unwrap();
        let cfg = TrainConfig {
            batch_size: 3,
            excerpt_frames: 40,
            ..TrainConfig::default()
        };
        let cache = SpectraCache::new(&data).unwrap();
        let a = sample_batch(&data, &cfg, 2, 5).unwrap();
        let b = sample_batch_cached(&data, &cache, &cfg, 2, 5).unwrap();
        assert_eq!(a.labels, b.labels);
        let peak = a.mix.data().iter().fold(0.0f64, |m, v| m.max(*v));
        for (x, y) in a.mix.data().iter().zip(b.mix.data()).chain(a.vocal.data().iter().zip(b.vocal.data())) {
            assert!((x - y).abs() <= 1e-5 * peak);
        }
    }

    #[test]
    fn decreasing_loss_never_reduces() {
        let losses: Vec<f64> = (0..200).map(|k| 1.0 / (k + 1) as f64).collect();
        assert_eq!(schedule_trace(&losses), (vec![], None));
    }

    #[test]
    fn constant_loss_reduces_at_26_and_stops_at_51() {
        let (red, stop) = schedule_trace(&[1.0; 100]);
        assert_eq!(red.len(), 1);
        assert_eq!(red[0].0, 26);
        assert!((red[0].1 - 0.0003).abs() < 1e-15);
        assert_eq!(stop, Some(51));
    }

    #[test]
    fn new_minimum_resets_both_counters() {
        let mut losses = vec![1.0; 20];
        losses.push(0.5);
        losses.extend([0.7; 60]);
        let (red, stop) = schedule_trace(&losses);
        assert_eq!(red[0].0, 21 + 25);
        assert_eq!(stop, Some(21 + 50));
    }

    #[test]
    fn mse_examples() {
        let a = Tensor::from_fn(&[2, 3], |i| i as f64);
        assert_eq!(mse_loss(&a, &a).unwrap(), 0.0);
        let b = Tensor::from_fn(&[2, 3], |i| i as f64 + 1.0);
        assert_eq!(mse_loss(&b, &a).unwrap(), 1.0);
        assert!(mse_loss(&a, &Tensor::zeros(&[3, 2])).is_err());
    }

    #[test]
    fn history_csv_format() {
        let h = vec![EpochRecord {
            epoch: 1,
            train_loss: 0.5,
            val_loss: 0.25,
            lr: 0.001,
        }];
        assert_eq!(history_csv(&h), "epoch,train_loss,val_loss,lr\n1,0.5,0.25,0.001\n");
    }

    #[test]
    fn config_checks() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            early_stop_patience: 10,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            plateau_factor: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn mse_matches_scalar_loop(pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..64)) {
            let a = Tensor::new(&[pairs.len()], pairs.iter().map(|p| p.0).collect()).unwrap();
            let b = Tensor::new(&[pairs.len()], pairs.iter().map(|p| p.1).collect()).unwrap();
            let mut acc = 0.0;
            for (x, y) in &pairs {
                acc += (x - y) * (x - y);
            }
            let expect = acc / pairs.len() as f64;
            prop_assert!((mse_loss(&a, &b).unwrap() - expect).abs() <= 1e-12 * expect.max(1.0));
        }

        #[test]
        fn schedule_depends_only_on_losses(losses in prop::collection::vec(0.0f64..1.0, 0..120)) {
            prop_assert_eq!(schedule_trace(&losses), schedule_trace(&losses));
        }
    }
}

//! Evaluation: framewise BSS-eval, aggregation, vocal-activity scoring and
//! the incorrect-lyrics ablation.

mod ablation;
pub mod bss;

use serde::{Deserialize, Serialize};

pub use ablation::{ablate, ablation_csv, AblationRow, AblationTable, LyricsMode};
pub use bss::{bss_eval_frame, BssDecomposition, FrameEval, FrameFlags, FrameProjector, Metrics, CAP_DB, DEFAULT_FILTER_LEN};

use crate::dataset::{Dataset, Split};
use crate::dsp::{reconstruct_vocal, stft, AudioClip, Spectrogram, HOP, SAMPLE_RATE, WINDOW};
use crate::error::{Error, Result};
use crate::lyrics::{corrupt, va_labels, FrameLabels};
use crate::model::ModelBundle;
use crate::training::derive_seed;

const SECOND: usize = SAMPLE_RATE as usize;
/// Vocal-activity threshold on the renormalized frame energy.
pub const VA_THRESHOLD: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    pub filter_len: usize,
    /// Accompaniment gain used to build test mixtures.
    pub gain: f64,
    pub split: Split,
    /// Runs per stochastic ablation mode.
    pub ablation_seeds: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            filter_len: DEFAULT_FILTER_LEN,
            gain: 0.75,
            split: Split::Test,
            ablation_seeds: 5,
        }
    }
}

impl EvalOptions {
    pub fn validate(&self) -> Result<()> {
        if self.filter_len == 0 || self.filter_len > SECOND {
            return Err(Error::Config(format!("filter_len must be in 1..={SECOND}")));
        }
        if !(self.gain > 0.0 && self.gain.is_finite()) {
            return Err(Error::Config("gain must be positive".into()));
        }
        if self.ablation_seeds == 0 {
            return Err(Error::Config("ablation_seeds must be at least 1".into()));
        }
        Ok(())
    }
}

/// A test mixture with its references and aligned lyrics.
#[derive(Clone, Debug)]
pub struct TestTrack {
    pub name: String,
    pub vocal: AudioClip,
    /// Already scaled by the mixing gain.
    pub accompaniment: AudioClip,
    pub labels: FrameLabels,
    pub mixture: AudioClip,
    pub mix_spec: Spectrogram,
}

impl TestTrack {
    pub fn new(name: &str, vocal: AudioClip, accompaniment: AudioClip, labels: FrameLabels) -> Result<Self> {
        if vocal.len() != accompaniment.len() {
            return Err(Error::dim("test track", &[vocal.len()], &[accompaniment.len()]));
        }
        let mixture = AudioClip::new(vocal.samples.iter().zip(&accompaniment.samples).map(|(v, a)| v + a).collect());
        let mix_spec = stft(&mixture)?;
        if labels.len() != mix_spec.frames {
            return Err(Error::dim("test labels", &[mix_spec.frames], &[labels.len()]));
        }
        Ok(TestTrack {
            name: name.to_string(),
            vocal,
            accompaniment,
            labels,
            mixture,
            mix_spec,
        })
    }

    pub fn eval_frames(&self) -> usize {
        eval_frame_count(self.vocal.len())
    }
}

/// Pairs each vocal of the split with an accompaniment of the same split
/// (round robin), trimmed to the shorter of the two.
pub fn test_tracks(data: &Dataset, opts: &EvalOptions) -> Result<Vec<TestTrack>> {
    let accs: Vec<_> = data.accompaniments_in(opts.split).collect();
    if accs.is_empty() {
        return Err(Error::Dataset(format!("no accompaniments in the {:?} split", opts.split)));
    }
    let mut out = Vec::new();
    for (i, v) in data.vocals_in(opts.split).enumerate() {
        let acc = accs[i % accs.len()];
        let n = v.audio.len().min(acc.audio.len());
        let frames = crate::dsp::n_frames(n);
        if frames == 0 {
            return Err(Error::Dataset(format!("{} is shorter than one STFT window", v.name)));
        }
        let scaled = AudioClip::new(acc.audio.samples[..n].iter().map(|a| opts.gain * a).collect());
        let name = format!("{}+{}", v.name, acc.name);
        out.push(TestTrack::new(&name, v.audio.slice(0, n)?, scaled, v.labels.slice(0, frames))?);
    }
    if out.is_empty() {
        return Err(Error::Dataset(format!("no vocals in the {:?} split", opts.split)));
    }
    Ok(out)
}

/// One-second evaluation frames; shorter tracks form a single frame.
pub fn eval_frame_count(samples: usize) -> usize {
    (samples / SECOND).max(1)
}

fn frame_range(samples: usize, k: usize) -> std::ops::Range<usize> {
    if samples < SECOND {
        0..samples
    } else {
        k * SECOND..(k + 1) * SECOND
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackReport {
    pub name: String,
    pub frames: Vec<FrameEval>,
}

impl TrackReport {
    pub fn excluded(&self) -> usize {
        self.frames.iter().filter(|f| !f.counts()).count()
    }
}

/// Per-frame metrics of every estimate against the same references. Each
/// frame's Gram factorization is shared across estimates.
pub fn evaluate_track_many(vocal: &[f64], accompaniment: &[f64], estimates: &[&[f64]], filter_len: usize) -> Result<Vec<Vec<FrameEval>>> {
    let n = vocal.len();
    if accompaniment.len() != n {
        return Err(Error::dim("evaluate_track", &[n], &[accompaniment.len()]));
    }
    for e in estimates {
        if e.len() != n {
            return Err(Error::dim("evaluate_track", &[n], &[e.len()]));
        }
    }
    let mut out = vec![Vec::new(); estimates.len()];
    for k in 0..eval_frame_count(n) {
        let r = frame_range(n, k);
        let p = FrameProjector::new([&vocal[r.clone()], &accompaniment[r.clone()]], filter_len.min(r.len()))?;
        for (slot, e) in out.iter_mut().zip(estimates) {
            slot.push(p.evaluate(&e[r.clone()])?);
        }
    }
    Ok(out)
}

pub fn evaluate_track(vocal: &[f64], accompaniment: &[f64], estimate: &[f64], filter_len: usize) -> Result<Vec<FrameEval>> {
    Ok(evaluate_track_many(vocal, accompaniment, &[estimate], filter_len)?.remove(0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Median over frames, then median over tracks.
    Median,
    /// Mean over frames, then mean over tracks.
    Mean,
}

/// Median with the midpoint convention for even counts.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Track-level then set-level reduction. Tracks without a usable frame are
/// skipped with a warning.
pub fn aggregate(reports: &[TrackReport], mode: Aggregation) -> Result<(Metrics, Vec<String>)> {
    if reports.is_empty() {
        return Err(Error::Input("aggregate needs at least one track".into()));
    }
    let reduce = match mode {
        Aggregation::Median => median,
        Aggregation::Mean => mean,
    };
    let mut warnings = Vec::new();
    let mut per_track: [Vec<f64>; 3] = Default::default();
    for r in reports {
        let used: Vec<&Metrics> = r.frames.iter().filter(|f| f.counts()).map(|f| &f.metrics).collect();
        if used.is_empty() {
            warnings.push(format!("{}: no frame with an active reference; track skipped", r.name));
            continue;
        }
        per_track[0].push(reduce(&used.iter().map(|m| m.sdr).collect::<Vec<_>>()));
        per_track[1].push(reduce(&used.iter().map(|m| m.sir).collect::<Vec<_>>()));
        per_track[2].push(reduce(&used.iter().map(|m| m.sar).collect::<Vec<_>>()));
    }
    if per_track[0].is_empty() {
        return Err(Error::Input("no track has a usable frame".into()));
    }
    Ok((
        Metrics {
            sdr: reduce(&per_track[0]),
            sir: reduce(&per_track[1]),
            sar: reduce(&per_track[2]),
        },
        warnings,
    ))
}

/// Per-STFT-frame activity: normalize by the global maximum, sum over
/// frequency, renormalize the sums by their maximum and threshold.
pub fn va_frames(magnitude: &[f64], frames: usize) -> Vec<u8> {
    if frames == 0 {
        return Vec::new();
    }
    let peak = magnitude.iter().fold(0.0f64, |m, &v| m.max(v));
    if !(peak > 0.0) {
        return vec![0; frames];
    }
    let bins = magnitude.len() / frames;
    let mut sums = vec![0.0; frames];
    for f in 0..bins {
        for (t, s) in sums.iter_mut().enumerate() {
            *s += magnitude[f * frames + t] / peak;
        }
    }
    let top = sums.iter().fold(0.0f64, |m, &v| m.max(v));
    sums.iter().map(|&s| u8::from(s / top > VA_THRESHOLD)).collect()
}

/// Evaluation frame holding the centre of STFT frame `t`.
fn eval_frame_of(t: usize) -> usize {
    (t * HOP + WINDOW / 2) / SECOND
}

/// An evaluation frame is active if any STFT frame centred in it is.
pub fn pool_to_eval_frames(active: &[u8], n_eval: usize) -> Vec<u8> {
    let mut out = vec![0; n_eval];
    for (t, &a) in active.iter().enumerate() {
        let k = eval_frame_of(t).min(n_eval.saturating_sub(1));
        if a != 0 && k < n_eval {
            out[k] = 1;
        }
    }
    out
}

pub fn va_vector(magnitude: &[f64], frames: usize, n_eval: usize) -> Vec<u8> {
    pool_to_eval_frames(&va_frames(magnitude, frames), n_eval)
}

/// Ground truth: frames where the lyrics are not silence.
pub fn va_truth(labels: &FrameLabels, n_eval: usize) -> Vec<u8> {
    pool_to_eval_frames(&va_labels(labels), n_eval)
}

/// `None` where the ratio is undefined (no predicted or no true positives).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaScores {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

pub fn va_scores(predicted: &[u8], truth: &[u8]) -> Result<VaScores> {
    if predicted.len() != truth.len() {
        return Err(Error::dim("va_scores", &[predicted.len()], &[truth.len()]));
    }
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&p, &t) in predicted.iter().zip(truth) {
        match (p != 0, t != 0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    let precision = (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64);
    let recall = (tp + fneg > 0).then(|| tp as f64 / (tp + fneg) as f64);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    Ok(VaScores { precision, recall, f1 })
}

/// Eval-mode separation of a whole track.
pub struct Separation {
    pub vocal: AudioClip,
    /// Bin-major estimated magnitude.
    pub magnitude: Vec<f64>,
    pub frames: usize,
}

pub fn separate(model: &ModelBundle, mix_spec: &Spectrogram, samples: usize, labels: Option<&FrameLabels>) -> Result<Separation> {
    let frames = mix_spec.frames;
    let mix = mix_spec.magnitudes();
    let mut magnitude = model.separate(&mix, frames, labels)?;
    if model.spec.separator.clamp_to_mixture {
        magnitude.iter_mut().zip(&mix).for_each(|(m, x)| *m = m.min(*x));
    }
    let est = Spectrogram::from_magnitudes(frames, magnitude.clone())?;
    let mut vocal = reconstruct_vocal(mix_spec, &est)?.samples;
    vocal.resize(samples, 0.0);
    Ok(Separation {
        vocal: AudioClip::new(vocal),
        magnitude,
        frames,
    })
}

/// Lyrics given to the model for one run: aligned, or corrupted with a
/// seed derived from the run seed and track index.
pub fn run_labels(track: &TestTrack, index: usize, mode: LyricsMode, vocab_size: Option<usize>, seed: u64) -> Result<FrameLabels> {
    match mode.corruption() {
        None => Ok(track.labels.clone()),
        Some(c) => {
            let n = vocab_size.ok_or_else(|| Error::Variant("corrupted lyrics need a lyrics model".into()))?;
            corrupt(&track.labels, c, n, derive_seed(&[seed, 20, index as u64]))
        }
    }
}

/// One separation setting to evaluate on every track.
#[derive(Clone, Copy)]
pub struct Job<'a> {
    pub model: &'a ModelBundle,
    pub mode: LyricsMode,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JobResult {
    pub tracks: Vec<TrackReport>,
    /// Pooled predicted and true vocal activity over all tracks.
    pub va_predicted: Vec<u8>,
    pub va_truth: Vec<u8>,
}

/// Separates and evaluates every job on every track. Tracks run in
/// parallel; results keep job and track order.
pub fn run_jobs(tracks: &[TestTrack], jobs: &[Job], filter_len: usize, threads: usize) -> Result<Vec<JobResult>> {
    let per_track = crate::parallel::map(tracks, threads, |i, track| {
        let mut estimates = Vec::new();
        let mut va = Vec::new();
        let n_eval = track.eval_frames();
        for job in jobs {
            let labels = run_labels(track, i, job.mode, job.model.vocab_size(), job.seed)?;
            let labels = job.model.spec.input_mode.needs_labels().then_some(&labels);
            let s = separate(job.model, &track.mix_spec, track.vocal.len(), labels)?;
            va.push(va_vector(&s.magnitude, s.frames, n_eval));
            estimates.push(s.vocal.samples);
        }
        let refs: Vec<&[f64]> = estimates.iter().map(|e| e.as_slice()).collect();
        let frames = evaluate_track_many(&track.vocal.samples, &track.accompaniment.samples, &refs, filter_len)?;
        Ok((frames, va))
    })?;
    let mut out: Vec<JobResult> = jobs
        .iter()
        .map(|_| JobResult {
            tracks: Vec::new(),
            va_predicted: Vec::new(),
            va_truth: Vec::new(),
        })
        .collect();
    for (track, (frames, va)) in tracks.iter().zip(per_track) {
        let truth = va_truth(&track.labels, track.eval_frames());
        for ((r, f), v) in out.iter_mut().zip(frames).zip(va) {
            r.tracks.push(TrackReport {
                name: track.name.clone(),
                frames: f,
            });
            r.va_predicted.extend(v);
            r.va_truth.extend(&truth);
        }
    }
    Ok(out)
}

/// Scores of one model on a test set.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub model: String,
    pub filter_len: usize,
    pub tracks: Vec<TrackReport>,
    pub median: Metrics,
    pub mean: Metrics,
    pub va: VaScores,
    pub excluded_frames: usize,
    pub warnings: Vec<String>,
}

impl EvalReport {
    pub fn from_job(model: &str, filter_len: usize, r: JobResult) -> Result<Self> {
        let (median, mut warnings) = aggregate(&r.tracks, Aggregation::Median)?;
        let (mean, _) = aggregate(&r.tracks, Aggregation::Mean)?;
        let va = va_scores(&r.va_predicted, &r.va_truth)?;
        if va.recall.is_none() {
            warnings.push("no voiced frames in the ground truth; VA recall undefined".into());
        }
        Ok(EvalReport {
            model: model.to_string(),
            filter_len,
            excluded_frames: r.tracks.iter().map(TrackReport::excluded).sum(),
            tracks: r.tracks,
            median,
            mean,
            va,
            warnings,
        })
    }
}

pub fn evaluate_model(model: &ModelBundle, tracks: &[TestTrack], opts: &EvalOptions, threads: usize) -> Result<EvalReport> {
    let job = Job {
        model,
        mode: LyricsMode::Lyrics,
        seed: 0,
    };
    let r = run_jobs(tracks, &[job], opts.filter_len, threads)?.remove(0);
    EvalReport::from_job(&model.spec.tag(), opts.filter_len, r)
}

fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.6}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "nan".into(), num)
}

/// `track,frame,sdr,sir,sar,flags`
pub fn frames_csv(reports: &[TrackReport]) -> String {
    let mut s = String::from("track,frame,sdr,sir,sar,flags\n");
    for r in reports {
        for (k, f) in r.frames.iter().enumerate() {
            let m = &f.metrics;
            s += &format!("{},{k},{},{},{},{}\n", r.name, num(m.sdr), num(m.sir), num(m.sar), f.flags.to_text());
        }
    }
    s
}

/// Models by statistic (median, mean) by metric.
pub fn summary_csv(reports: &[EvalReport]) -> String {
    let mut s = String::from("model,statistic,sdr,sir,sar\n");
    for r in reports {
        for (stat, m) in [("median", &r.median), ("mean", &r.mean)] {
            s += &format!("{},{stat},{},{},{}\n", r.model, num(m.sdr), num(m.sir), num(m.sar));
        }
    }
    s
}

pub fn va_csv(reports: &[EvalReport]) -> String {
    let mut s = String::from("model,precision,recall,f1\n");
    for r in reports {
        s += &format!("{},{},{},{}\n", r.model, opt(r.va.precision), opt(r.va.recall), opt(r.va.f1));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frame(sdr: f64) -> FrameEval {
        FrameEval {
            metrics: Metrics { sdr, sir: sdr + 1.0, sar: sdr - 1.0 },
            flags: FrameFlags::default(),
        }
    }

    fn track(name: &str, sdrs: &[f64]) -> TrackReport {
        TrackReport {
            name: name.into(),
            frames: sdrs.iter().map(|&v| frame(v)).collect(),
        }
    }

    #[test]
    fn aggregation_examples() {
        let one = [track("a", &[1.0, 2.0, 9.0])];
        assert_eq!(aggregate(&one, Aggregation::Median).unwrap().0.sdr, 2.0);
        assert_eq!(aggregate(&one, Aggregation::Mean).unwrap().0.sdr, 4.0);
        let two = [track("a", &[3.0]), track("b", &[5.0, 4.0, 6.0])];
        assert_eq!(aggregate(&two, Aggregation::Median).unwrap().0.sdr, 4.0);
        assert!(aggregate(&[], Aggregation::Mean).is_err());
    }

    #[test]
    fn silent_frames_are_excluded_and_empty_tracks_skipped() {
        let mut t = track("a", &[1.0, 100.0, 3.0]);
        t.frames[1].flags.silent_reference = true;
        t.frames[1].metrics = Metrics::UNDEFINED;
        assert_eq!(aggregate(&[t.clone()], Aggregation::Mean).unwrap().0.sdr, 2.0);
        let mut empty = track("b", &[5.0]);
        empty.frames[0].flags.silent_reference = true;
        let (m, w) = aggregate(&[t, empty], Aggregation::Median).unwrap();
        assert_eq!(m.sdr, 2.0);
        assert_eq!(w.len(), 1);
    }

    proptest! {
        #[test]
        fn aggregation_ignores_frame_order(v in prop::collection::vec(-50.0f64..50.0, 1..20), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut w = v.clone();
            w.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            for mode in [Aggregation::Median, Aggregation::Mean] {
                let a = aggregate(&[track("x", &v)], mode).unwrap().0.sdr;
                let b = aggregate(&[track("x", &w)], mode).unwrap().0.sdr;
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }

        #[test]
        fn va_scores_invariant_under_joint_permutation(pairs in prop::collection::vec((0u8..2, 0u8..2), 1..60), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut q = pairs.clone();
            q.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let split = |v: &[(u8, u8)]| -> (Vec<u8>, Vec<u8>) { v.iter().copied().unzip() };
            let (p1, t1) = split(&pairs);
            let (p2, t2) = split(&q);
            prop_assert_eq!(va_scores(&p1, &t1).unwrap(), va_scores(&p2, &t2).unwrap());
        }
    }

    #[test]
    fn va_toy_examples() {
        // four frames, one bin: sums already renormalized
        assert_eq!(va_frames(&[1.0, 0.05, 0.2, 0.0], 4), vec![1, 0, 1, 0]);
        assert_eq!(va_frames(&[0.0; 8], 4), vec![0; 4]);
        let mut one = vec![0.0; 513 * 10];
        one[7 * 10 + 6] = 3.0;
        assert_eq!(va_frames(&one, 10), vec![0, 0, 0, 0, 0, 0, 1, 0, 0, 0]);
        let s = va_scores(&[1, 1, 1, 1], &[1, 0, 1, 0]).unwrap();
        assert_eq!((s.precision, s.recall), (Some(0.5), Some(1.0)));
        assert!((s.f1.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let s = va_scores(&[1, 0, 1], &[1, 0, 1]).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (Some(1.0), Some(1.0), Some(1.0)));
        assert_eq!(va_scores(&[1, 0], &[0, 0]).unwrap().recall, None);
    }

    #[test]
    fn pooling_uses_frame_centres() {
        // frame 84 is centred at 22016 samples (< 1 s), frame 85 at 22272
        let mut active = vec![0u8; 200];
        active[85] = 1;
        assert_eq!(pool_to_eval_frames(&active, 2), vec![0, 1]);
        active[85] = 0;
        active[84] = 1;
        assert_eq!(pool_to_eval_frames(&active, 2), vec![1, 0]);
    }

    #[test]
    fn frame_counts() {
        assert_eq!(eval_frame_count(20 * SECOND + 100), 20);
        assert_eq!(eval_frame_count(SECOND / 2), 1);
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1);
        use rand::Rng;
        let v: Vec<f64> = (0..SECOND / 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a: Vec<f64> = (0..SECOND / 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let e: Vec<f64> = v.iter().zip(&a).map(|(x, y)| x + 0.3 * y).collect();
        let rows = evaluate_track(&v, &a, &e, 16).unwrap();
        assert_eq!(rows.len(), 1);
    }

    #[test]
    fn csv_formats() {
        let mut t = track("s+a", &[1.5]);
        t.frames[0].flags.capped = true;
        assert_eq!(frames_csv(&[t]), "track,frame,sdr,sir,sar,flags\ns+a,0,1.500000,2.500000,0.500000,capped\n");
    }

    #[test]
    fn clamp_limits_estimate_to_mixture() {
        use crate::encoder::EncoderConfig;
        use crate::model::{InputMode, ModelSpec};
        use crate::separator::{SeparatorConfig, Variant};
        let spec = ModelSpec {
            input_mode: InputMode::None,
            separator: SeparatorConfig {
                width: 4,
                lstm_layers: 1,
                ..SeparatorConfig::new(Variant::Baseline)
            },
            encoder: EncoderConfig::default(),
        };
        let mut model = ModelBundle::new(&spec, None, 3).unwrap();
        let shift = model.store.name(model.separator.output_scaler.shift).to_string();
        model.store.set_data(&shift, vec![5.0; spec.separator.freq_bins]).unwrap();
        let samples = 4 * WINDOW;
        let x: Vec<f64> = (0..samples).map(|i| 1e-3 * (i as f64 * 0.05).sin()).collect();
        let mix = stft(&AudioClip::new(x)).unwrap();
        let mags = mix.magnitudes();
        let over = |m: &[f64]| m.iter().zip(&mags).any(|(e, x)| e > x);
        assert!(over(&separate(&model, &mix, samples, None).unwrap().magnitude));
        model.spec.separator.clamp_to_mixture = true;
        assert!(!over(&separate(&model, &mix, samples, None).unwrap().magnitude));
    }
}

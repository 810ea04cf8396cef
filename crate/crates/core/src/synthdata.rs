//! Deterministic synthetic singing dataset.
//!
//! Vocals are a band-limited sawtooth (or noise for unvoiced consonants)
//! through three parallel formant resonators chosen per phoneme, so phoneme
//! identity is visible in the spectrum. Accompaniments mix a formant "choir"
//! pad that sings random syllables with filtered-noise percussion, which
//! makes the vocal hard to pick out without knowing what is being sung.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{AccompanimentEntry, DatasetManifest, Split, VocalEntry};
use crate::dsp::{n_frames, write_wav, AudioClip, HOP, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::lyrics::{split_span, write_alignment, PhonemeVocabulary, SyllableAlignment};
use crate::training::derive_seed;

const FS: f64 = SAMPLE_RATE as f64;
/// Vocal peak level (about -6 dBFS).
const PEAK: f64 = 0.5;
/// Accompaniment peak level (about -10 dBFS).
const ACC_PEAK: f64 = 0.3;

/// Full inventory in vocabulary order after `SIL`.
const INVENTORY: [&str; 11] = ["a", "i", "u", "e", "o", "k", "s", "m", "t", "n", "l"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhonemeKind {
    Vowel,
    Nasal,
    Liquid,
    Fricative,
    Stop,
}

impl PhonemeKind {
    pub fn is_voiced(self) -> bool {
        matches!(self, PhonemeKind::Vowel | PhonemeKind::Nasal | PhonemeKind::Liquid)
    }
}

/// Three resonances `(centre Hz, bandwidth Hz, gain)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Recipe {
    pub kind: PhonemeKind,
    pub formants: [(f64, f64, f64); 3],
}

pub fn recipe(symbol: &str) -> Option<Recipe> {
    use PhonemeKind::*;
    let r = |kind, formants| Some(Recipe { kind, formants });
    match symbol {
        "a" => r(Vowel, [(800.0, 80.0, 1.0), (1200.0, 90.0, 0.7), (2500.0, 120.0, 0.3)]),
        "i" => r(Vowel, [(280.0, 50.0, 0.6), (2300.0, 100.0, 1.0), (3000.0, 150.0, 0.6)]),
        "u" => r(Vowel, [(320.0, 60.0, 1.0), (700.0, 80.0, 0.5), (2300.0, 120.0, 0.1)]),
        "e" => r(Vowel, [(500.0, 60.0, 0.8), (1800.0, 100.0, 1.0), (2600.0, 120.0, 0.4)]),
        "o" => r(Vowel, [(450.0, 70.0, 0.6), (800.0, 80.0, 1.0), (2400.0, 120.0, 0.15)]),
        "k" => r(Stop, [(1800.0, 400.0, 1.0), (3000.0, 500.0, 0.5), (4500.0, 600.0, 0.3)]),
        "s" => r(Fricative, [(5000.0, 1500.0, 1.0), (7000.0, 2000.0, 0.6), (3500.0, 800.0, 0.2)]),
        "m" => r(Nasal, [(250.0, 60.0, 1.0), (1100.0, 120.0, 0.3), (2300.0, 200.0, 0.1)]),
        "t" => r(Stop, [(4000.0, 800.0, 1.0), (6000.0, 1200.0, 0.5), (2500.0, 600.0, 0.3)]),
        "n" => r(Nasal, [(350.0, 70.0, 0.5), (1700.0, 120.0, 1.0), (2600.0, 200.0, 0.3)]),
        "l" => r(Liquid, [(350.0, 70.0, 1.0), (1300.0, 100.0, 0.8), (2900.0, 150.0, 0.4)]),
        _ => None,
    }
}

/// The first `size - 1` inventory symbols after `SIL`.
pub fn vocabulary(size: usize) -> Result<PhonemeVocabulary> {
    if !(3..=INVENTORY.len() + 1).contains(&size) {
        return Err(Error::Config(format!(
            "synthetic vocabulary size must be in 3..={}, got {size}",
            INVENTORY.len() + 1
        )));
    }
    PhonemeVocabulary::new(&INVENTORY[..size - 1])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub n_singers: usize,
    /// Per singer: one test song, one validation song, the rest train.
    pub songs_per_singer: usize,
    pub song_seconds: f64,
    pub n_accompaniments: usize,
    pub vocabulary_size: usize,
    /// Simultaneous choir voices in the accompaniment.
    pub choir_voices: usize,
    /// Chance that a choir note starts (and, at 60% of this, ends) with a
    /// consonant.
    pub choir_consonants: f64,
    /// Level of the sawtooth pads relative to the choir; 0 leaves them out.
    pub pad_level: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_singers: 4,
            songs_per_singer: 6,
            song_seconds: 20.0,
            n_accompaniments: 24,
            vocabulary_size: 12,
            choir_voices: 2,
            choir_consonants: 0.5,
            pad_level: 0.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_singers == 0 || self.songs_per_singer < 3 {
            return Err(Error::Config("need at least one singer with three songs".into()));
        }
        if self.n_accompaniments < 3 {
            return Err(Error::Config("need at least three accompaniments".into()));
        }
        if !(0.0..=1.0).contains(&self.choir_consonants) {
            return Err(Error::Config("choir_consonants must lie in [0, 1]".into()));
        }
        if !(self.pad_level >= 0.0 && self.pad_level.is_finite()) {
            return Err(Error::Config("pad_level must be non-negative".into()));
        }
        if !(self.song_seconds >= 2.0 && self.song_seconds.is_finite()) {
            return Err(Error::Config("songs must last at least 2 s".into()));
        }
        vocabulary(self.vocabulary_size).map(|_| ())
    }
}

/// Per-singer voice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Singer {
    pub base_f0: f64,
    pub formant_scale: f64,
    pub vibrato_hz: f64,
}

pub fn singer(spec: &SynthSpec, index: usize) -> Singer {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[spec.seed, 10, index as u64]));
    let span = spec.n_singers.max(2) - 1;
    // spread base pitches over 150..300 Hz
    let base = 150.0 * 2f64.powf(index as f64 / span as f64);
    Singer {
        base_f0: base * rng.gen_range(0.97..1.03),
        formant_scale: rng.gen_range(0.93..1.07),
        vibrato_hz: rng.gen_range(4.5..6.0),
    }
}

/// Constant-peak-gain band-pass biquad.
#[derive(Clone, Copy, Debug, Default)]
struct Resonator {
    b0: f64,
    b2: f64,
    a1: f64,
    a2: f64,
    x1: f64,
    x2: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn tune(&mut self, f: f64, bw: f64) {
        let f = f.min(0.45 * FS);
        let w0 = 2.0 * PI * f / FS;
        let alpha = w0.sin() * (bw / f) / 2.0;
        let a0 = 1.0 + alpha;
        self.b0 = alpha / a0;
        self.b2 = -alpha / a0;
        self.a1 = -2.0 * w0.cos() / a0;
        self.a2 = (1.0 - alpha) / a0;
    }

    fn process(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.b2 * self.x2 - self.a1 * self.y1 - self.a2 * self.y2;
        self.x2 = self.x1;
        self.x1 = x;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

fn poly_blep(t: f64, dt: f64) -> f64 {
    if t < dt {
        let t = t / dt;
        2.0 * t - t * t - 1.0
    } else if t > 1.0 - dt {
        let t = (t - 1.0) / dt;
        t * t + 2.0 * t + 1.0
    } else {
        0.0
    }
}

/// A sawtooth or noise source feeding three formant resonators.
struct Voice {
    phase: f64,
    vib_phase: f64,
    filters: [Resonator; 3],
    gains: [f64; 3],
}

impl Voice {
    fn new() -> Self {
        Voice {
            phase: 0.0,
            vib_phase: 0.0,
            filters: [Resonator::default(); 3],
            gains: [0.0; 3],
        }
    }

    fn set(&mut self, r: &Recipe, formant_scale: f64) {
        for (k, &(f, bw, g)) in r.formants.iter().enumerate() {
            self.filters[k].tune(f * formant_scale, bw * formant_scale);
            self.gains[k] = g;
        }
    }

    fn saw(&mut self, f0: f64, vibrato_hz: f64, depth: f64) -> f64 {
        let f = f0 * (1.0 + depth * (2.0 * PI * self.vib_phase).sin());
        self.vib_phase = (self.vib_phase + vibrato_hz / FS).fract();
        let dt = f / FS;
        let v = 2.0 * self.phase - 1.0 - poly_blep(self.phase, dt);
        self.phase = (self.phase + dt).fract();
        v
    }

    fn filter(&mut self, x: f64) -> f64 {
        let mut y = 0.0;
        for k in 0..3 {
            y += self.gains[k] * self.filters[k].process(x);
        }
        y
    }
}

/// Linear attack/release envelope over `n` samples.
fn envelope(i: usize, n: usize, attack: usize, release: usize) -> f64 {
    let a = if attack > 0 { (i as f64 / attack as f64).min(1.0) } else { 1.0 };
    let r = if release > 0 {
        ((n - i) as f64 / release as f64).min(1.0)
    } else {
        1.0
    };
    a.min(r)
}

/// Renders consecutive phoneme segments `(recipe, samples)` as one note
/// starting at `out[start]`.
fn render_note(out: &mut [f64], start: usize, segments: &[(Recipe, usize)], f0: f64, who: &Singer, level: f64, rng: &mut ChaCha8Rng) {
    let total: usize = segments.iter().map(|s| s.1).sum();
    let mut v = Voice::new();
    v.phase = rng.gen();
    v.vib_phase = rng.gen();
    let (attack, release) = ((0.008 * FS) as usize, (0.02 * FS) as usize);
    let mut i = 0;
    for (r, len) in segments {
        v.set(r, who.formant_scale);
        let burst = (0.012 * FS) as usize;
        for k in 0..*len {
            let src = match r.kind {
                PhonemeKind::Vowel | PhonemeKind::Liquid => v.saw(f0, who.vibrato_hz, 0.012),
                PhonemeKind::Nasal => 0.6 * v.saw(f0, who.vibrato_hz, 0.012),
                PhonemeKind::Fricative => 0.9 * rng.gen_range(-1.0..1.0),
                PhonemeKind::Stop => {
                    let decay = (-(k as f64) / burst as f64).exp();
                    (0.25 + 1.5 * decay) * rng.gen_range(-1.0..1.0)
                }
            };
            if let Some(o) = out.get_mut(start + i) {
                *o += level * envelope(i, total, attack, release) * v.filter(src);
            }
            i += 1;
        }
    }
}

fn normalise(x: &mut [f64]) {
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        x.iter_mut().for_each(|v| *v *= PEAK / peak);
    }
}

/// First sample of frame `t`'s territory: halfway between the centres of
/// frames `t - 1` and `t`.
fn frame_edge(t: usize) -> usize {
    t * HOP + 384
}

fn edge_sec(t: usize) -> f64 {
    frame_edge(t) as f64 / FS
}

const PENTATONIC: [i32; 7] = [-5, -3, 0, 2, 4, 7, 9];

/// One vocal track and its alignment.
pub fn render_song(spec: &SynthSpec, vocab: &PhonemeVocabulary, who: &Singer, seed: u64) -> (AudioClip, Vec<SyllableAlignment>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (spec.song_seconds * FS) as usize;
    let frames = n_frames(n);
    let ids: Vec<usize> = (1..vocab.len()).collect();
    let recipes: Vec<Recipe> = (0..vocab.len())
        .map(|i| vocab.symbol(i).and_then(recipe).unwrap_or(Recipe {
            kind: PhonemeKind::Vowel,
            formants: [(0.0, 1.0, 0.0); 3],
        }))
        .collect();
    let vowels: Vec<usize> = ids.iter().copied().filter(|&i| recipes[i].kind == PhonemeKind::Vowel).collect();
    let consonants: Vec<usize> = ids.iter().copied().filter(|&i| recipes[i].kind != PhonemeKind::Vowel).collect();
    let mut out = vec![0.0; n];
    let mut rows = Vec::new();
    let mut t = rng.gen_range(8..40);
    let mut left_in_phrase = rng.gen_range(3..8);
    while t + 20 < frames.saturating_sub(4) {
        let len = rng.gen_range(14..48).min(frames - 4 - t);
        let onset = (!consonants.is_empty() && rng.gen_bool(0.6)).then(|| *consonants.choose(&mut rng).expect("non-empty"));
        let coda = (!consonants.is_empty() && rng.gen_bool(0.4)).then(|| *consonants.choose(&mut rng).expect("non-empty"));
        let nucleus = *vowels.choose(&mut rng).expect("vocabulary has a vowel");
        let (on, nu, _) = split_span(len, onset.is_some(), coda.is_some());
        let edge = |k: usize| frame_edge(t + k);
        let mut segs = Vec::new();
        if let Some(o) = onset {
            segs.push((recipes[o], edge(on) - edge(0)));
        }
        segs.push((recipes[nucleus], edge(on + nu) - edge(on)));
        if let Some(c) = coda {
            segs.push((recipes[c], edge(len) - edge(on + nu)));
        }
        let semis = *PENTATONIC.choose(&mut rng).expect("non-empty");
        let f0 = who.base_f0 * 2f64.powf(semis as f64 / 12.0);
        render_note(&mut out, edge(0), &segs, f0, who, 1.0, &mut rng);
        rows.push(SyllableAlignment {
            start_sec: edge_sec(t),
            end_sec: edge_sec(t + len),
            onset,
            nucleus,
            coda,
        });
        left_in_phrase -= 1;
        t += len
            + if left_in_phrase == 0 {
                left_in_phrase = rng.gen_range(3..8);
                rng.gen_range(25..80)
            } else {
                rng.gen_range(2..7)
            };
    }
    normalise(&mut out);
    (AudioClip::new(out), rows)
}

/// Choir voices singing random syllables over chord roots, optional plain
/// sawtooth pads, and hi-hat and kick made from filtered noise and a
/// decaying sine.
pub fn render_accompaniment(spec: &SynthSpec, vocab: &PhonemeVocabulary, seed: u64) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (spec.song_seconds * FS) as usize;
    let recipes: Vec<Recipe> = vocab.symbols().iter().filter_map(|s| recipe(s)).collect();
    let vowels: Vec<Recipe> = recipes.iter().copied().filter(|r| r.kind == PhonemeKind::Vowel).collect();
    let consonants: Vec<Recipe> = recipes.iter().copied().filter(|r| r.kind != PhonemeKind::Vowel).collect();
    let consonant_len = (0.05 * FS) as usize;
    let mut choir = vec![0.0; n];
    let mut pos = 0;
    while pos < n {
        let chord_len = (rng.gen_range(1.0..2.5) * FS) as usize;
        let root = rng.gen_range(140.0..260.0);
        // stacked intervals above the root
        let mut semis_set: Vec<f64> = (spec.choir_voices > 0).then_some(0.0).into_iter().collect();
        for _ in 1..spec.choir_voices {
            let step = *[3.0, 4.0, 5.0, 7.0].choose(&mut rng).expect("non-empty");
            semis_set.push(semis_set[semis_set.len() - 1] + step);
        }
        for semis in semis_set {
            let voice = Singer {
                base_f0: root * 2f64.powf(semis / 12.0),
                formant_scale: rng.gen_range(0.93..1.07),
                vibrato_hz: rng.gen_range(4.5..6.0),
            };
            let mut p = pos;
            while p < (pos + chord_len).min(n) {
                let len = (rng.gen_range(0.2..0.6) * FS) as usize;
                // random syllables, so the pad shares the vocal's timbre
                let mut segs = Vec::new();
                let mut body = len;
                if !consonants.is_empty() && rng.gen_bool(spec.choir_consonants) {
                    segs.push((*consonants.choose(&mut rng).expect("non-empty"), consonant_len));
                    body -= consonant_len;
                }
                let coda = (!consonants.is_empty() && rng.gen_bool(0.6 * spec.choir_consonants)).then(|| *consonants.choose(&mut rng).expect("non-empty"));
                if coda.is_some() {
                    body -= consonant_len;
                }
                segs.push((*vowels.choose(&mut rng).expect("vocabulary has a vowel"), body));
                if let Some(c) = coda {
                    segs.push((c, consonant_len));
                }
                render_note(&mut choir, p, &segs, voice.base_f0, &voice, 0.6, &mut rng);
                p += len + (rng.gen_range(0.0..0.08) * FS) as usize;
            }
        }
        pos += chord_len;
    }
    let mut drums = vec![0.0; n];
    let beat = (60.0 / rng.gen_range(96.0..140.0) * FS) as usize;
    let mut hat = Resonator::default();
    hat.tune(8000.0, 4000.0);
    for (k, start) in (0..n).step_by(beat / 2).enumerate() {
        let hat_len = (0.06 * FS) as usize;
        for i in 0..hat_len.min(n - start) {
            drums[start + i] += 0.5 * (-(i as f64) / (0.015 * FS)).exp() * hat.process(rng.gen_range(-1.0..1.0));
        }
        if k % 2 == 0 {
            let kick_len = (0.2 * FS) as usize;
            let mut ph = 0.0;
            for i in 0..kick_len.min(n - start) {
                let f = 50.0 + 60.0 * (-(i as f64) / (0.03 * FS)).exp();
                ph += f / FS;
                drums[start + i] += 0.8 * (-(i as f64) / (0.08 * FS)).exp() * (2.0 * PI * ph).sin();
            }
        }
    }
    normalise(&mut choir);
    normalise(&mut drums);
    let mut out: Vec<f64> = (0..n).map(|i| choir[i] + 0.4 * drums[i]).collect();
    if spec.pad_level > 0.0 {
        let mut pads = render_pads(n, &mut ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 1])));
        normalise(&mut pads);
        out.iter_mut().zip(&pads).for_each(|(o, p)| *o += spec.pad_level * p);
    }
    normalise(&mut out);
    out.iter_mut().for_each(|v| *v *= ACC_PEAK / PEAK);
    AudioClip::new(out)
}

/// Low-passed sawtooth triads without vibrato or formants.
fn render_pads(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = vec![0.0; n];
    let a = (-2.0 * PI * 1200.0 / FS).exp();
    let mut pos = 0;
    while pos < n {
        let len = ((rng.gen_range(1.5..3.0) * FS) as usize).min(n - pos);
        let root = rng.gen_range(110.0..220.0);
        let minor: bool = rng.gen();
        for semis in [0.0, if minor { 3.0 } else { 4.0 }, 7.0] {
            let f0 = root * 2f64.powf(semis / 12.0);
            let mut v = Voice::new();
            v.phase = rng.gen();
            let (mut y1, mut y2) = (0.0, 0.0);
            for i in 0..len {
                let x = v.saw(f0, 0.0, 0.0);
                y1 = (1.0 - a) * x + a * y1;
                y2 = (1.0 - a) * y1 + a * y2;
                out[pos + i] += envelope(i, len, (0.1 * FS) as usize, (0.2 * FS) as usize) * y2;
            }
        }
        pos += len;
    }
    out
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the dataset under `out_dir` and returns its manifest (also written
/// to `out_dir/manifest.json`, last).
pub fn generate(spec: &SynthSpec, out_dir: &Path, threads: usize) -> Result<DatasetManifest> {
    spec.validate()?;
    let vocab = vocabulary(spec.vocabulary_size)?;
    for sub in ["vocals", "alignments", "accompaniments"] {
        let d = out_dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    write_text(&out_dir.join("vocab.txt"), &vocab.to_text())?;

    let songs: Vec<(usize, usize)> = (0..spec.n_singers)
        .flat_map(|s| (0..spec.songs_per_singer).map(move |k| (s, k)))
        .collect();
    let vocals = crate::parallel::map(&songs, threads, |_, &(s, k)| {
        let who = singer(spec, s);
        let (clip, rows) = render_song(spec, &vocab, &who, derive_seed(&[spec.seed, 11, s as u64, k as u64]));
        let name = format!("singer{s}_song{k}");
        let audio = PathBuf::from("vocals").join(format!("{name}.wav"));
        let alignment = PathBuf::from("alignments").join(format!("{name}.csv"));
        write_wav(&out_dir.join(&audio), &clip)?;
        write_text(&out_dir.join(&alignment), &write_alignment(&rows, &vocab))?;
        let split = match spec.songs_per_singer - 1 - k {
            0 => Split::Test,
            1 => Split::Validation,
            _ => Split::Train,
        };
        Ok(VocalEntry {
            audio,
            alignment,
            singer: format!("singer{s}"),
            split,
        })
    })?;

    let n_acc = spec.n_accompaniments;
    let held_out = (n_acc / 6).max(1);
    let accs: Vec<usize> = (0..n_acc).collect();
    let accompaniments = crate::parallel::map(&accs, threads, |_, &k| {
        let clip = render_accompaniment(spec, &vocab, derive_seed(&[spec.seed, 12, k as u64]));
        let audio = PathBuf::from("accompaniments").join(format!("acc{k}.wav"));
        write_wav(&out_dir.join(&audio), &clip)?;
        let split = if k >= n_acc - held_out {
            Split::Test
        } else if k >= n_acc - 2 * held_out {
            Split::Validation
        } else {
            Split::Train
        };
        Ok(AccompanimentEntry { audio, split })
    })?;

    let manifest = DatasetManifest {
        vocabulary: PathBuf::from("vocab.txt"),
        vocals,
        accompaniments,
    };
    manifest.write(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{stft, WINDOW};
    use crate::lyrics::{expand_to_frames, syllable_frames, va_labels};

    fn short() -> SynthSpec {
        SynthSpec {
            n_singers: 2,
            songs_per_singer: 3,
            song_seconds: 6.0,
            n_accompaniments: 3,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn alignment_matches_vocal_energy() {
        let spec = short();
        let vocab = vocabulary(12).unwrap();
        for s in 0..2 {
            let (clip, rows) = render_song(&spec, &vocab, &singer(&spec, s), 100 + s as u64);
            assert!(!rows.is_empty());
            let frames = clip.n_frames();
            let va = va_labels(&expand_to_frames(&rows, frames).labels);
            let loud: Vec<bool> = (0..frames)
                .map(|t| {
                    let w = &clip.samples[t * HOP..t * HOP + WINDOW];
                    let rms = (w.iter().map(|v| v * v).sum::<f64>() / WINDOW as f64).sqrt();
                    20.0 * rms.log10() > -40.0
                })
                .collect();
            for t in 0..frames {
                let lo = t.saturating_sub(2);
                let hi = (t + 3).min(frames);
                if va[t] == 1 {
                    assert!(loud[lo..hi].iter().any(|&l| l), "voiced frame {t} is quiet");
                }
                if loud[t] {
                    assert!(va[lo..hi].iter().any(|&v| v == 1), "loud frame {t} is unlabelled");
                }
            }
            for r in &rows {
                let (a, b) = syllable_frames(r);
                assert!(b - a >= 3);
            }
        }
    }

    fn average_spectrum(symbol: &str) -> Vec<f64> {
        let r = recipe(symbol).unwrap();
        let who = Singer {
            base_f0: 200.0,
            formant_scale: 1.0,
            vibrato_hz: 5.0,
        };
        let mut out = vec![0.0; 2 * SAMPLE_RATE as usize];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = out.len();
        render_note(&mut out, 0, &[(r, n)], 200.0, &who, 1.0, &mut rng);
        let spec = stft(&AudioClip::new(out)).unwrap();
        let m = spec.magnitudes();
        (0..513).map(|f| m[f * spec.frames..(f + 1) * spec.frames].iter().sum()).collect()
    }

    #[test]
    fn phoneme_spectra_are_distinct() {
        let spectra: Vec<(&str, Vec<f64>)> = INVENTORY.iter().map(|s| (*s, average_spectrum(s))).collect();
        for (i, (a, x)) in spectra.iter().enumerate() {
            for (b, y) in &spectra[i + 1..] {
                let dot: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
                let norm = |v: &[f64]| v.iter().map(|p| p * p).sum::<f64>().sqrt();
                let cos = dot / (norm(x) * norm(y));
                assert!(cos < 0.95, "{a} vs {b}: cosine {cos}");
            }
        }
    }

    #[test]
    fn outputs_never_clip() {
        let spec = short();
        let vocab = vocabulary(12).unwrap();
        let (v, _) = render_song(&spec, &vocab, &singer(&spec, 0), 3);
        let a = render_accompaniment(&spec, &vocab, 4);
        let limit = 10f64.powf(-1.0 / 20.0);
        assert!(v.peak() <= limit && a.peak() <= limit);
        assert!(v.peak() > 0.1 && a.peak() > 0.1);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = short();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let m1 = generate(&spec, d1.path(), 2).unwrap();
        let m2 = generate(&spec, d2.path(), 1).unwrap();
        assert_eq!(m1, m2);
        for rel in m1
            .vocals
            .iter()
            .flat_map(|v| [&v.audio, &v.alignment])
            .chain(m1.accompaniments.iter().map(|a| &a.audio))
            .chain([&m1.vocabulary])
        {
            let a = std::fs::read(d1.path().join(rel)).unwrap();
            let b = std::fs::read(d2.path().join(rel)).unwrap();
            assert!(a == b, "{} differs", rel.display());
        }
        let splits: Vec<Split> = m1.vocals.iter().map(|v| v.split).collect();
        assert_eq!(splits.iter().filter(|s| **s == Split::Test).count(), 2);
        let data = crate::dataset::Dataset::load(&d1.path().join("manifest.json")).unwrap();
        assert_eq!(data.vocals.len(), 6);
        assert!(data.warnings.is_empty(), "{:?}", data.warnings);
    }

    #[test]
    fn vocabulary_sizes() {
        assert_eq!(vocabulary(12).unwrap().len(), 12);
        assert_eq!(vocabulary(3).unwrap().symbols(), &["SIL", "a", "i"]);
        assert!(vocabulary(2).is_err());
        assert!(vocabulary(13).is_err());
    }
}

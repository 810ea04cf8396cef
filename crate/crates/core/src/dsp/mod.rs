//! Audio clips, STFT analysis/synthesis and WAV I/O.
//!
//! Analysis runs at 22050 Hz with a 1024-point Hann window and a 256-sample
//! hop, giving 513 bins per frame.

mod stft;
mod wav;

pub use stft::{istft, reconstruct_vocal, stft, SpecData, Spectrogram};
pub use wav::{read_wav, write_wav, WavInfo};

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 22050;
pub const WINDOW: usize = 1024;
pub const HOP: usize = 256;
pub const BINS: usize = WINDOW / 2 + 1;

/// Mono audio at [`SAMPLE_RATE`].
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>) -> Self {
        AudioClip {
            samples,
            sample_rate: SAMPLE_RATE,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Number of STFT frames this clip produces.
    pub fn n_frames(&self) -> usize {
        n_frames(self.samples.len())
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn slice(&self, start: usize, len: usize) -> Result<AudioClip> {
        if start + len > self.samples.len() {
            return Err(Error::Input(format!(
                "slice [{start}, {}) beyond clip of {} samples",
                start + len,
                self.samples.len()
            )));
        }
        Ok(AudioClip::new(self.samples[start..start + len].to_vec()))
    }
}

/// STFT frames for a signal of `len` samples (no centering padding).
pub fn n_frames(len: usize) -> usize {
    if len < WINDOW {
        0
    } else {
        (len - WINDOW) / HOP + 1
    }
}

/// Samples needed to produce exactly `frames` STFT frames.
pub fn samples_for_frames(frames: usize) -> usize {
    if frames == 0 {
        0
    } else {
        (frames - 1) * HOP + WINDOW
    }
}

pub fn frames_to_seconds(n_frames: f64) -> f64 {
    n_frames * HOP as f64 / SAMPLE_RATE as f64
}

pub fn seconds_to_frames(seconds: f64) -> f64 {
    seconds * SAMPLE_RATE as f64 / HOP as f64
}

/// Linear-interpolation resampling.
pub fn resample_linear(samples: &[f64], from: u32, to: u32) -> Vec<f64> {
    if from == to || samples.is_empty() {
        return samples.to_vec();
    }
    let ratio = from as f64 / to as f64;
    let out_len = ((samples.len() as f64) / ratio).floor() as usize;
    (0..out_len)
        .map(|i| {
            let pos = i as f64 * ratio;
            let k = pos.floor() as usize;
            let frac = pos - k as f64;
            let a = samples[k.min(samples.len() - 1)];
            let b = samples[(k + 1).min(samples.len() - 1)];
            a + (b - a) * frac
        })
        .collect()
}

/// Signal-to-noise ratio of `estimate` against `reference` in dB.
pub fn snr_db(reference: &[f64], estimate: &[f64]) -> f64 {
    let signal: f64 = reference.iter().map(|v| v * v).sum();
    let noise: f64 = reference.iter().zip(estimate).map(|(a, b)| (a - b).powi(2)).sum();
    10.0 * (signal / noise).log10()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_arithmetic() {
        assert_eq!(n_frames(22050), 83);
        assert_eq!(n_frames(1023), 0);
        assert_eq!(n_frames(1024), 1);
        assert_eq!(n_frames(samples_for_frames(64)), 64);
    }

    #[test]
    fn frames_to_seconds_examples() {
        let trunc4 = |x: f64| (x * 1e4).floor() / 1e4;
        assert_eq!(trunc4(frames_to_seconds(165.0)), 1.9156);
        assert_eq!(trunc4(frames_to_seconds(86.0)), 0.9984);
        assert_eq!(frames_to_seconds(0.0), 0.0);
        assert!((seconds_to_frames(frames_to_seconds(123.0)) - 123.0).abs() < 1e-12);
    }

    #[test]
    fn resampling_keeps_duration() {
        let x: Vec<f64> = (0..44100).map(|i| (i as f64 * 0.01).sin()).collect();
        let y = resample_linear(&x, 44100, 22050);
        assert_eq!(y.len(), 22050);
        assert!((y[100] - x[200]).abs() < 1e-12);
    }
}

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{resample_linear, AudioClip, SAMPLE_RATE};
use crate::error::{Error, Result};

/// What was done to bring a file to the analysis format.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WavInfo {
    pub original_rate: u32,
    pub original_channels: u16,
    pub resampled: bool,
    pub downmixed: bool,
}

/// Reads 16-bit PCM or 32-bit float WAV, averaging channels and resampling
/// to 22050 Hz.
pub fn read_wav(path: &Path) -> Result<(AudioClip, WavInfo)> {
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let reader = WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err)?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err)?,
        (fmt, bits) => {
            return Err(Error::Input(format!(
                "{}: unsupported sample format {fmt:?}/{bits}-bit",
                path.display()
            )))
        }
    };
    let ch = spec.channels.max(1) as usize;
    let mono: Vec<f64> = interleaved
        .chunks(ch)
        .map(|frame| frame.iter().sum::<f64>() / ch as f64)
        .collect();
    let samples = resample_linear(&mono, spec.sample_rate, SAMPLE_RATE);
    Ok((
        AudioClip::new(samples),
        WavInfo {
            original_rate: spec.sample_rate,
            original_channels: spec.channels,
            resampled: spec.sample_rate != SAMPLE_RATE,
            downmixed: ch > 1,
        },
    ))
}

/// Writes 16-bit PCM mono at 22050 Hz, clipping to [-1, 1].
pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let mut w = WavWriter::create(path, spec).map_err(wav_err)?;
    for &s in &clip.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        w.write_sample(v).map_err(wav_err)?;
    }
    w.finalize().map_err(wav_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pcm16_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let clip = AudioClip::new((0..1000).map(|i| ((i as f64) * 0.05).sin() * 0.5).collect());
        write_wav(&p, &clip).unwrap();
        let (back, info) = read_wav(&p).unwrap();
        assert!(!info.resampled && !info.downmixed);
        assert_eq!(back.len(), clip.len());
        for (a, b) in clip.samples.iter().zip(&back.samples) {
            assert!((a - b).abs() < 1.0 / 16384.0);
        }
    }

    #[test]
    fn stereo_float_is_downmixed_and_resampled() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        let spec = WavSpec {
            channels: 2,
            sample_rate: 44100,
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        };
        let mut w = WavWriter::create(&p, spec).unwrap();
        for _ in 0..4410 {
            w.write_sample(0.5f32).unwrap();
            w.write_sample(-0.25f32).unwrap();
        }
        w.finalize().unwrap();
        let (clip, info) = read_wav(&p).unwrap();
        assert!(info.resampled && info.downmixed);
        assert_eq!(clip.len(), 2205);
        assert!(clip.samples.iter().all(|v| (v - 0.125).abs() < 1e-9));
    }
}

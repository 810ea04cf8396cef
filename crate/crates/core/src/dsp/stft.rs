use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{AudioClip, BINS, HOP, WINDOW};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum SpecData {
    Complex(Vec<Complex64>),
    Magnitude(Vec<f64>),
}

/// Bin-major `[513 x frames]` spectrogram: entry `(f, t)` at `f * frames + t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    pub frames: usize,
    pub data: SpecData,
}

impl Spectrogram {
    pub fn bins(&self) -> usize {
        BINS
    }

    pub fn is_complex(&self) -> bool {
        matches!(self.data, SpecData::Complex(_))
    }

    pub fn magnitude(&self) -> Spectrogram {
        let mags = match &self.data {
            SpecData::Complex(c) => c.iter().map(|z| z.norm()).collect(),
            SpecData::Magnitude(m) => m.clone(),
        };
        Spectrogram {
            frames: self.frames,
            data: SpecData::Magnitude(mags),
        }
    }

    /// Magnitude values, bin-major.
    pub fn magnitudes(&self) -> Vec<f64> {
        match self.magnitude().data {
            SpecData::Magnitude(m) => m,
            SpecData::Complex(_) => unreachable!(),
        }
    }

    pub fn from_magnitudes(frames: usize, mags: Vec<f64>) -> Result<Self> {
        if mags.len() != BINS * frames {
            return Err(Error::dim("spectrogram", &[BINS, frames], &[mags.len()]));
        }
        if mags.iter().any(|m| *m < 0.0) {
            return Err(Error::Input("magnitude spectrogram must be nonnegative".into()));
        }
        Ok(Spectrogram {
            frames,
            data: SpecData::Magnitude(mags),
        })
    }
}

fn hann() -> Vec<f64> {
    // periodic Hann: overlap-adds to a constant at a quarter-window hop
    (0..WINDOW)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / WINDOW as f64).cos())
        .collect()
}

fn plan(inverse: bool) -> Arc<dyn Fft<f64>> {
    static PLANS: OnceLock<[Arc<dyn Fft<f64>>; 2]> = OnceLock::new();
    let plans = PLANS.get_or_init(|| {
        let mut planner = FftPlanner::new();
        [planner.plan_fft_forward(WINDOW), planner.plan_fft_inverse(WINDOW)]
    });
    plans[usize::from(inverse)].clone()
}

/// Hann-windowed STFT; frame `t` covers samples `[256 t, 256 t + 1024)`.
pub fn stft(clip: &AudioClip) -> Result<Spectrogram> {
    let x = &clip.samples;
    if x.len() < WINDOW {
        return Err(Error::Input(format!(
            "clip of {} samples is shorter than one {WINDOW}-sample window",
            x.len()
        )));
    }
    let frames = super::n_frames(x.len());
    let window = hann();
    let fft = plan(false);
    let mut out = vec![Complex64::new(0.0, 0.0); BINS * frames];
    let mut buf = vec![Complex64::new(0.0, 0.0); WINDOW];
    for t in 0..frames {
        let seg = &x[t * HOP..t * HOP + WINDOW];
        for ((b, s), w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = Complex64::new(s * w, 0.0);
        }
        fft.process(&mut buf);
        for f in 0..BINS {
            out[f * frames + t] = buf[f];
        }
    }
    Ok(Spectrogram {
        frames,
        data: SpecData::Complex(out),
    })
}

/// Weighted overlap-add inverse normalized by the summed squared window.
/// Output length is `(frames - 1) * 256 + 1024`.
pub fn istft(spec: &Spectrogram) -> Result<AudioClip> {
    let SpecData::Complex(data) = &spec.data else {
        return Err(Error::Type("istft needs a complex spectrogram (phase required)".into()));
    };
    let frames = spec.frames;
    let len = super::samples_for_frames(frames);
    let window = hann();
    let ifft = plan(true);
    let mut out = vec![0.0; len];
    let mut norm = vec![0.0; len];
    let mut buf = vec![Complex64::new(0.0, 0.0); WINDOW];
    for t in 0..frames {
        for f in 0..BINS {
            buf[f] = data[f * frames + t];
        }
        // Hermitian extension; DC and Nyquist imaginary parts are dropped
        buf[0].im = 0.0;
        buf[BINS - 1].im = 0.0;
        for f in BINS..WINDOW {
            buf[f] = buf[WINDOW - f].conj();
        }
        ifft.process(&mut buf);
        for n in 0..WINDOW {
            let w = window[n];
            out[t * HOP + n] += buf[n].re / WINDOW as f64 * w;
            norm[t * HOP + n] += w * w;
        }
    }
    for (o, n) in out.iter_mut().zip(&norm) {
        *o = if *n > 1e-10 { *o / n } else { 0.0 };
    }
    Ok(AudioClip::new(out))
}

/// Applies an estimated magnitude to the mixture phase and inverts.
pub fn reconstruct_vocal(mixture: &Spectrogram, vocal_magnitude: &Spectrogram) -> Result<AudioClip> {
    let SpecData::Complex(mix) = &mixture.data else {
        return Err(Error::Type("mixture spectrogram must be complex".into()));
    };
    if mixture.frames != vocal_magnitude.frames {
        return Err(Error::dim(
            "reconstruct_vocal",
            &[BINS, mixture.frames],
            &[BINS, vocal_magnitude.frames],
        ));
    }
    let mags = vocal_magnitude.magnitudes();
    let data = mix
        .iter()
        .zip(&mags)
        .map(|(z, m)| {
            let r = z.norm();
            if r > 0.0 {
                z * (m / r)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    istft(&Spectrogram {
        frames: mixture.frames,
        data: SpecData::Complex(data),
    })
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::dsp::{snr_db, SAMPLE_RATE};

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect()
    }

    fn sine(freq: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| 0.5 * (2.0 * PI * freq * i as f64 / SAMPLE_RATE as f64).sin())
            .collect()
    }

    fn interior(x: &[f64]) -> &[f64] {
        &x[WINDOW..x.len() - WINDOW]
    }

    #[test]
    fn one_second_gives_83_frames() {
        let s = stft(&AudioClip::new(vec![0.0; 22050])).unwrap();
        assert_eq!(s.frames, 83);
        assert_eq!(s.bins(), 513);
    }

    #[test]
    fn short_clip_is_rejected() {
        assert!(matches!(stft(&AudioClip::new(vec![0.0; 1000])), Err(Error::Input(_))));
    }

    #[test]
    fn zero_clip_gives_zero_spectrogram() {
        let s = stft(&AudioClip::new(vec![0.0; 4096])).unwrap();
        assert!(s.magnitudes().iter().all(|&m| m == 0.0));
        let y = istft(&s).unwrap();
        assert!(y.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bin_centred_sine_concentrates_in_main_lobe() {
        let k = 40;
        let freq = SAMPLE_RATE as f64 * k as f64 / WINDOW as f64;
        let s = stft(&AudioClip::new(sine(freq, 8192))).unwrap();
        let m = s.magnitudes();
        for t in 0..s.frames {
            let e: Vec<f64> = (0..BINS).map(|f| m[f * s.frames + t].powi(2)).collect();
            let total: f64 = e.iter().sum();
            let peak = (0..BINS).max_by(|&a, &b| e[a].total_cmp(&e[b])).unwrap();
            assert_eq!(peak, k);
            // the Hann main lobe spans bins k-1..=k+1
            assert!((e[k - 1] + e[k] + e[k + 1]) / total >= 0.99);
        }
    }

    #[test]
    fn white_noise_round_trip_snr() {
        let x = noise(22050 * 2, 1);
        let y = istft(&stft(&AudioClip::new(x.clone())).unwrap()).unwrap();
        let n = y.len();
        assert!(snr_db(interior(&x[..n]), interior(&y.samples)) >= 60.0);
    }

    #[test]
    fn round_trip_preserves_sine_peak() {
        let freq = 1000.0;
        let x = sine(freq, 16384);
        let y = istft(&stft(&AudioClip::new(x)).unwrap()).unwrap();
        let s = stft(&y).unwrap().magnitudes();
        let frames = n_frames_of(&y);
        let t = frames / 2;
        let peak = (0..BINS)
            .max_by(|&a, &b| s[a * frames + t].total_cmp(&s[b * frames + t]))
            .unwrap();
        assert_eq!(peak, (freq * WINDOW as f64 / SAMPLE_RATE as f64).round() as usize);
    }

    fn n_frames_of(c: &AudioClip) -> usize {
        crate::dsp::n_frames(c.len())
    }

    #[test]
    fn parseval_per_frame() {
        let x = noise(4096, 2);
        let s = stft(&AudioClip::new(x.clone())).unwrap();
        let SpecData::Complex(c) = &s.data else { unreachable!() };
        let w = hann();
        for t in 0..s.frames {
            let time: f64 = (0..WINDOW).map(|n| (x[t * HOP + n] * w[n]).powi(2)).sum();
            let mut spec = 0.0;
            for f in 0..BINS {
                let e = c[f * s.frames + t].norm_sqr();
                spec += if f == 0 || f == BINS - 1 { e } else { 2.0 * e };
            }
            spec /= WINDOW as f64;
            assert!((time - spec).abs() / time < 1e-8);
        }
    }

    #[test]
    fn stft_is_linear() {
        let a = noise(4096, 3);
        let b = noise(4096, 4);
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 2.0 * x - 0.5 * y).collect();
        let get = |v: &[f64]| match stft(&AudioClip::new(v.to_vec())).unwrap().data {
            SpecData::Complex(c) => c,
            _ => unreachable!(),
        };
        let (sa, sb, sm) = (get(&a), get(&b), get(&mix));
        for i in 0..sm.len() {
            assert!((sm[i] - (sa[i] * 2.0 - sb[i] * 0.5)).norm() < 1e-10);
        }
    }

    #[test]
    fn istft_rejects_magnitudes() {
        let s = stft(&AudioClip::new(vec![0.1; 2048])).unwrap().magnitude();
        assert!(matches!(istft(&s), Err(Error::Type(_))));
    }

    #[test]
    fn reconstruction_with_mixture_magnitude_is_exact() {
        let x = noise(8192, 5);
        let s = stft(&AudioClip::new(x.clone())).unwrap();
        let direct = istft(&s).unwrap();
        let rebuilt = reconstruct_vocal(&s, &s.magnitude()).unwrap();
        assert_eq!(direct, rebuilt);
        let n = rebuilt.len();
        let err = interior(&x[..n])
            .iter()
            .zip(interior(&rebuilt.samples))
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-10);
    }

    #[test]
    fn reconstruction_with_zero_magnitude_is_silent() {
        let s = stft(&AudioClip::new(noise(4096, 6))).unwrap();
        let zero = Spectrogram::from_magnitudes(s.frames, vec![0.0; BINS * s.frames]).unwrap();
        let y = reconstruct_vocal(&s, &zero).unwrap();
        assert!(y.samples.iter().all(|&v| v == 0.0));
        let short = Spectrogram::from_magnitudes(s.frames - 1, vec![0.0; BINS * (s.frames - 1)]).unwrap();
        assert!(matches!(reconstruct_vocal(&s, &short), Err(Error::Dimension { .. })));
    }

    #[test]
    fn oracle_magnitude_separates_disjoint_sources() {
        let n = 22050;
        let vocal = sine(440.0, n);
        let acc: Vec<f64> = sine(3000.0, n).iter().map(|v| v * 0.8).collect();
        let mix: Vec<f64> = vocal.iter().zip(&acc).map(|(a, b)| a + b).collect();
        let mix_spec = stft(&AudioClip::new(mix)).unwrap();
        let oracle = stft(&AudioClip::new(vocal.clone())).unwrap().magnitude();
        let est = reconstruct_vocal(&mix_spec, &oracle).unwrap();
        let len = est.len();
        assert!(snr_db(interior(&vocal[..len]), interior(&est.samples)) >= 20.0);
    }
}

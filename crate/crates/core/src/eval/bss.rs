//! Frame-level BSS-eval: least-squares projection of an estimate onto
//! delayed copies of the true sources.
//!
//! Signals are zero-extended to `N + L - 1` samples so every delayed copy
//! fits, which makes the Gram matrix block Toeplitz in the source
//! correlations. The target source comes first in the Gram ordering, so the
//! leading `L x L` block of the full Cholesky factor factors the
//! target-only system as well.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Reported dB values are clamped to `[-CAP_DB, CAP_DB]`.
pub const CAP_DB: f64 = 100.0;
pub const DEFAULT_FILTER_LEN: usize = 512;

/// Reference energy below this (per sample) counts as silence.
const SILENCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct FrameFlags {
    /// Target reference is silent; metrics are undefined and the frame is
    /// excluded from aggregation.
    pub silent_reference: bool,
    /// Estimate is all zeros; metrics are reported as `-CAP_DB`.
    pub zero_estimate: bool,
    /// Gram matrix was singular and a ridge was added.
    pub regularized: bool,
    /// At least one value hit the dB cap.
    pub capped: bool,
}

impl FrameFlags {
    pub fn to_text(&self) -> String {
        let mut parts = Vec::new();
        for (on, name) in [
            (self.silent_reference, "silent_ref"),
            (self.zero_estimate, "zero_est"),
            (self.regularized, "ridge"),
            (self.capped, "capped"),
        ] {
            if on {
                parts.push(name);
            }
        }
        parts.join("|")
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub sdr: f64,
    pub sir: f64,
    pub sar: f64,
}

impl Metrics {
    pub const UNDEFINED: Metrics = Metrics {
        sdr: f64::NAN,
        sir: f64::NAN,
        sar: f64::NAN,
    };
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameEval {
    pub metrics: Metrics,
    pub flags: FrameFlags,
}

impl FrameEval {
    /// Frames with a silent reference carry no metric.
    pub fn counts(&self) -> bool {
        !self.flags.silent_reference
    }
}

/// Components on the zero-extended support of `N + filter_len - 1` samples.
#[derive(Clone, Debug, PartialEq)]
pub struct BssDecomposition {
    pub s_target: Vec<f64>,
    pub e_interf: Vec<f64>,
    pub e_artif: Vec<f64>,
    pub filter_len: usize,
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// `10 log10(num / den)` clamped to the cap; the bool reports clamping.
pub fn ratio_db(num: f64, den: f64) -> (f64, bool) {
    if !(den > 0.0) {
        return (CAP_DB, true);
    }
    if !(num > 0.0) {
        return (-CAP_DB, true);
    }
    let db = 10.0 * (num / den).log10();
    if db.abs() > CAP_DB {
        (db.clamp(-CAP_DB, CAP_DB), true)
    } else {
        (db, false)
    }
}

impl BssDecomposition {
    pub fn metrics(&self) -> (Metrics, bool) {
        let st = energy(&self.s_target);
        let noise: Vec<f64> = self.e_interf.iter().zip(&self.e_artif).map(|(a, b)| a + b).collect();
        let signal: Vec<f64> = self.s_target.iter().zip(&self.e_interf).map(|(a, b)| a + b).collect();
        let (sdr, c1) = ratio_db(st, energy(&noise));
        let (sir, c2) = ratio_db(st, energy(&self.e_interf));
        let (sar, c3) = ratio_db(energy(&signal), energy(&self.e_artif));
        (Metrics { sdr, sir, sar }, c1 || c2 || c3)
    }
}

/// Correlations, Gram factor and spectra for one frame of references.
/// Built once and applied to any number of estimates.
pub struct FrameProjector {
    n: usize,
    l: usize,
    nfft: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    spectra: [Vec<Complex<f64>>; 2],
    chol: Option<DMatrix<f64>>,
    regularized: bool,
    silent: bool,
}

impl FrameProjector {
    /// `references[0]` is the target source.
    pub fn new(references: [&[f64]; 2], filter_len: usize) -> Result<Self> {
        let n = references[0].len();
        if references[1].len() != n {
            return Err(Error::dim("references", &[n], &[references[1].len()]));
        }
        if filter_len == 0 || n < filter_len {
            return Err(Error::Input(format!(
                "frame of {n} samples is shorter than the {filter_len}-tap projection filter"
            )));
        }
        let l = filter_len;
        let nfft = (n + l - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(nfft);
        let inv = planner.plan_fft_inverse(nfft);
        let spec = |x: &[f64]| {
            let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
            buf.resize(nfft, Complex::new(0.0, 0.0));
            fwd.process(&mut buf);
            buf
        };
        let spectra = [spec(references[0]), spec(references[1])];
        let silent = energy(references[0]) <= SILENCE * n as f64;
        let mut p = FrameProjector {
            n,
            l,
            nfft,
            fwd: fwd.clone(),
            inv,
            spectra,
            chol: None,
            regularized: false,
            silent,
        };
        if !silent {
            p.factor();
        }
        Ok(p)
    }

    /// Circular cross-correlation `r[k] = sum_m x[m] y[m + k]`.
    fn xcorr(&self, x: &[Complex<f64>], y: &[Complex<f64>]) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = x.iter().zip(y).map(|(a, b)| a.conj() * b).collect();
        self.inv.process(&mut buf);
        let s = 1.0 / self.nfft as f64;
        buf.iter().map(|c| c.re * s).collect()
    }

    fn factor(&mut self) {
        let (l, nfft) = (self.l, self.nfft);
        let mut r = [[Vec::new(), Vec::new()], [Vec::new(), Vec::new()]];
        for i in 0..2 {
            for j in 0..2 {
                r[i][j] = self.xcorr(&self.spectra[i], &self.spectra[j]);
            }
        }
        let lag = |k: isize| k.rem_euclid(nfft as isize) as usize;
        let g = DMatrix::from_fn(2 * l, 2 * l, |row, col| {
            let (i, a) = (row / l, row % l);
            let (j, b) = (col / l, col % l);
            r[i][j][lag(a as isize - b as isize)]
        });
        let scale = g.diagonal().mean().max(f64::MIN_POSITIVE);
        let mut ridge = 0.0;
        loop {
            let mut m = g.clone();
            for k in 0..2 * l {
                m[(k, k)] += ridge;
            }
            if let Some(c) = m.cholesky() {
                self.chol = Some(c.unpack());
                return;
            }
            self.regularized = true;
            ridge = if ridge == 0.0 { 1e-10 * scale } else { ridge * 10.0 };
        }
    }

    pub fn is_silent(&self) -> bool {
        self.silent
    }

    pub fn regularized(&self) -> bool {
        self.regularized
    }

    /// Projection coefficients onto the target span and the full span.
    fn coefficients(&self, est_spec: &[Complex<f64>]) -> (DVector<f64>, DVector<f64>) {
        let l = self.l;
        let chol = self.chol.as_ref().expect("non-silent frame is factored");
        let mut c = DVector::zeros(2 * l);
        for j in 0..2 {
            let r = self.xcorr(&self.spectra[j], est_spec);
            for a in 0..l {
                c[j * l + a] = r[a];
            }
        }
        let solve = |lower: nalgebra::DMatrixView<f64>, rhs: &DVector<f64>| {
            let z = lower.solve_lower_triangular(rhs).expect("positive diagonal");
            lower.tr_solve_lower_triangular(&z).expect("positive diagonal")
        };
        let own = solve(chol.view((0, 0), (l, l)), &c.rows(0, l).into_owned());
        let all = solve(chol.as_view(), &c);
        (own, all)
    }

    /// Sum over sources of `coef_j * s_j` (full linear convolution).
    fn filter(&self, coefs: &[(&[Complex<f64>], &[f64])]) -> Vec<f64> {
        let mut acc = vec![Complex::new(0.0, 0.0); self.nfft];
        for (spec, coef) in coefs {
            let mut h: Vec<Complex<f64>> = coef.iter().map(|&v| Complex::new(v, 0.0)).collect();
            h.resize(self.nfft, Complex::new(0.0, 0.0));
            self.fwd.process(&mut h);
            for ((a, s), h) in acc.iter_mut().zip(spec.iter()).zip(&h) {
                *a += s * h;
            }
        }
        self.inv.process(&mut acc);
        let s = 1.0 / self.nfft as f64;
        acc[..self.n + self.l - 1].iter().map(|c| c.re * s).collect()
    }

    /// Explicit decomposition of one estimate frame (target = reference 0).
    pub fn decompose(&self, estimate: &[f64]) -> Result<BssDecomposition> {
        if estimate.len() != self.n {
            return Err(Error::dim("estimate", &[self.n], &[estimate.len()]));
        }
        if self.silent {
            return Err(Error::Input("target reference is silent; decomposition undefined".into()));
        }
        let l = self.l;
        let mut est_spec: Vec<Complex<f64>> = estimate.iter().map(|&v| Complex::new(v, 0.0)).collect();
        est_spec.resize(self.nfft, Complex::new(0.0, 0.0));
        self.fwd.process(&mut est_spec);
        let (own, all) = self.coefficients(&est_spec);
        let s_target = self.filter(&[(&self.spectra[0], own.as_slice())]);
        let p_all = self.filter(&[
            (&self.spectra[0], &all.as_slice()[..l]),
            (&self.spectra[1], &all.as_slice()[l..]),
        ]);
        let mut padded = estimate.to_vec();
        padded.resize(self.n + l - 1, 0.0);
        let e_interf = p_all.iter().zip(&s_target).map(|(p, s)| p - s).collect();
        let e_artif = padded.iter().zip(&p_all).map(|(e, p)| e - p).collect();
        Ok(BssDecomposition {
            s_target,
            e_interf,
            e_artif,
            filter_len: l,
        })
    }

    pub fn evaluate(&self, estimate: &[f64]) -> Result<FrameEval> {
        if estimate.len() != self.n {
            return Err(Error::dim("estimate", &[self.n], &[estimate.len()]));
        }
        let mut flags = FrameFlags {
            regularized: self.regularized,
            ..FrameFlags::default()
        };
        if self.silent {
            flags.silent_reference = true;
            return Ok(FrameEval {
                metrics: Metrics::UNDEFINED,
                flags,
            });
        }
        if estimate.iter().all(|&v| v == 0.0) {
            flags.zero_estimate = true;
            flags.capped = true;
            return Ok(FrameEval {
                metrics: Metrics {
                    sdr: -CAP_DB,
                    sir: -CAP_DB,
                    sar: -CAP_DB,
                },
                flags,
            });
        }
        let (metrics, capped) = self.decompose(estimate)?.metrics();
        flags.capped = capped;
        Ok(FrameEval { metrics, flags })
    }
}

/// SDR/SIR/SAR of `estimate` against target `references[0]` with
/// interference `references[1]`.
pub fn bss_eval_frame(references: [&[f64]; 2], estimate: &[f64], filter_len: usize) -> Result<FrameEval> {
    FrameProjector::new(references, filter_len)?.evaluate(estimate)
}

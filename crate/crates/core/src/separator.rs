//! BLSTM magnitude separator with optional lyrics conditioning.
//!
//! Pipeline on `[B, F, T]` magnitudes: input scaler, fc1, BN, tanh,
//! conditioning hook, stacked BLSTM, skip concat of the LSTM input and output,
//! fc2, BN, ReLU, fc3, BN, output scaler, ReLU. Fully connected layers are
//! pointwise convolutions so every frame shares the same weights.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AffineOrder, Graph, Var};
use crate::dsp::BINS;
use crate::error::{Error, Result};
use crate::nn::{BatchNorm, Blstm, BnUpdates, Conv, Scaler};
use crate::tensor::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Baseline,
    /// Gated convolution with additive lyrics features.
    LocalCond,
    /// Lyrics features concatenated to the fc1 output.
    Concat,
}

impl Variant {
    pub fn tag(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::LocalCond => "lc",
            Variant::Concat => "cc",
        }
    }

    pub fn is_conditioned(self) -> bool {
        self != Variant::Baseline
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeparatorConfig {
    pub variant: Variant,
    pub freq_bins: usize,
    /// fc1 output width; also the per-frame BLSTM output width.
    pub width: usize,
    pub lstm_layers: usize,
    /// Kernel of the two gated convolutions of the local-conditioning hook.
    #[serde(default = "default_lc_kernel")]
    pub lc_kernel: usize,
    /// Clip the estimated magnitude to the mixture magnitude before
    /// reconstruction.
    #[serde(default)]
    pub clamp_to_mixture: bool,
}

fn default_lc_kernel() -> usize {
    3
}

impl SeparatorConfig {
    pub fn new(variant: Variant) -> Self {
        SeparatorConfig {
            variant,
            freq_bins: BINS,
            width: 512,
            lstm_layers: 3,
            lc_kernel: default_lc_kernel(),
            clamp_to_mixture: false,
        }
    }

    pub fn lstm_hidden(&self) -> usize {
        self.width / 2
    }

    pub fn lstm_input_width(&self) -> usize {
        match self.variant {
            Variant::Concat => 2 * self.width,
            _ => self.width,
        }
    }

    pub fn fc2_input_width(&self) -> usize {
        self.lstm_input_width() + 2 * self.lstm_hidden()
    }

    /// Channel sizes of the two conditioning terms of the gated hook.
    pub fn lc_split(&self) -> Option<(usize, usize)> {
        (self.variant == Variant::LocalCond).then_some((self.width, self.width))
    }

    pub fn validate(&self) -> Result<()> {
        if self.freq_bins == 0 || self.width < 2 || self.width % 2 != 0 {
            return Err(Error::Config(format!(
                "separator needs positive bins and an even width >= 2 (got {} bins, width {})",
                self.freq_bins, self.width
            )));
        }
        if self.lstm_layers == 0 {
            return Err(Error::Config("separator needs at least one BLSTM layer".into()));
        }
        crate::autodiff::check_conv_geometry(self.lc_kernel, 1)
    }
}

/// `y = ReLU(x * W_f + L1) . sigma(x * W_g + L2)`.
pub fn local_condition(g: &mut Graph, x: Var, l1: Var, l2: Var, w_f: Var, w_g: Var) -> Result<Var> {
    for l in [l1, l2] {
        if g.shape(l) != g.shape(x) {
            return Err(Error::dim("local_condition", g.shape(x), g.shape(l)));
        }
    }
    let f = g.conv1d(x, w_f, 1)?;
    let f = g.add(f, l1)?;
    let f = g.relu(f);
    let s = g.conv1d(x, w_g, 1)?;
    let s = g.add(s, l2)?;
    let s = g.sigmoid(s);
    g.mul(f, s)
}

/// Channel concatenation in the order `(x, lyrics)`.
pub fn concat_condition(g: &mut Graph, x: Var, lyrics: Var) -> Result<Var> {
    if g.shape(x) != g.shape(lyrics) {
        return Err(Error::dim("concat_condition", g.shape(x), g.shape(lyrics)));
    }
    g.concat_channels(&[x, lyrics])
}

#[derive(Clone, Debug)]
enum Hook {
    None,
    Local { proj: Conv, w_f: Conv, w_g: Conv },
    Concat { proj: Conv },
}

#[derive(Clone, Debug)]
pub struct Separator {
    pub config: SeparatorConfig,
    pub input_scaler: Scaler,
    pub output_scaler: Scaler,
    fc1: Conv,
    bn1: BatchNorm,
    hook: Hook,
    lstms: Vec<Blstm>,
    fc2: Conv,
    bn2: BatchNorm,
    fc3: Conv,
    bn3: BatchNorm,
}

impl Separator {
    /// `cond_dim` is the width of the lyrics features; required exactly when
    /// the variant is conditioned.
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        config: &SeparatorConfig,
        cond_dim: Option<usize>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        config.validate()?;
        let (f, w) = (config.freq_bins, config.width);
        let p = |s: &str| format!("{prefix}.{s}");
        let input_scaler = Scaler::new(store, &p("input_scaler"), f, AffineOrder::ShiftThenScale);
        let fc1 = Conv::new(store, &p("fc1"), (f, w), 1, 1, rng)?;
        let bn1 = BatchNorm::new(store, &p("bn1"), w);
        let hook = match (config.variant, cond_dim) {
            (Variant::Baseline, None) => Hook::None,
            (Variant::LocalCond, Some(c)) => {
                let k = config.lc_kernel;
                Hook::Local {
                    proj: Conv::new(store, &p("lc.proj"), (c, 2 * w), 1, 1, rng)?,
                    w_f: Conv::new(store, &p("lc.w_f"), (w, w), k, 1, rng)?,
                    w_g: Conv::new(store, &p("lc.w_g"), (w, w), k, 1, rng)?,
                }
            }
            (Variant::Concat, Some(c)) => Hook::Concat {
                proj: Conv::new(store, &p("cc.proj"), (c, w), 1, 1, rng)?,
            },
            (v, c) => {
                return Err(Error::Variant(format!(
                    "{} separator {} lyrics features",
                    v.tag(),
                    if c.is_some() { "cannot take" } else { "requires" }
                )))
            }
        };
        let hidden = config.lstm_hidden();
        let mut lstms = Vec::with_capacity(config.lstm_layers);
        let mut width_in = config.lstm_input_width();
        for k in 0..config.lstm_layers {
            let l = Blstm::new(store, &p(&format!("lstm{k}")), width_in, hidden, rng);
            width_in = l.output_width();
            lstms.push(l);
        }
        let skip = config.lstm_input_width() + width_in;
        assert_eq!(lstms[0].input, config.lstm_input_width());
        assert_eq!(skip, config.fc2_input_width());
        let fc2 = Conv::new(store, &p("fc2"), (skip, w), 1, 1, rng)?;
        let bn2 = BatchNorm::new(store, &p("bn2"), w);
        let fc3 = Conv::new(store, &p("fc3"), (w, f), 1, 1, rng)?;
        let bn3 = BatchNorm::new(store, &p("bn3"), f);
        let output_scaler = Scaler::new(store, &p("output_scaler"), f, AffineOrder::ScaleThenShift);
        Ok(Separator {
            config: config.clone(),
            input_scaler,
            output_scaler,
            fc1,
            bn1,
            hook,
            lstms,
            fc2,
            bn2,
            fc3,
            bn3,
        })
    }

    /// Width fed to the first BLSTM, as built.
    pub fn lstm_input_width(&self) -> usize {
        self.lstms[0].input
    }

    /// Width fed to fc2, as built.
    pub fn fc2_input_width(&self) -> usize {
        self.fc2.in_ch
    }

    /// Channel sizes of the two conditioning terms, as built.
    pub fn lc_split(&self) -> Option<(usize, usize)> {
        match &self.hook {
            Hook::Local { proj, .. } => Some((proj.out_ch / 2, proj.out_ch - proj.out_ch / 2)),
            _ => None,
        }
    }

    /// `mix: [B, F, T]`, `lyrics: [B, C, T]` features; returns `[B, F, T]`.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        mix: Var,
        lyrics: Option<Var>,
        bn: &mut BnUpdates,
    ) -> Result<Var> {
        let shape = g.shape(mix).to_vec();
        if shape.len() != 3 || shape[1] != self.config.freq_bins {
            return Err(Error::dim("separator input", &shape, &[0, self.config.freq_bins, 0]));
        }
        match (&self.hook, lyrics) {
            (Hook::None, Some(_)) | (Hook::Local { .. } | Hook::Concat { .. }, None) => {
                return Err(Error::Variant(format!(
                    "{} separator {} lyrics features",
                    self.config.variant.tag(),
                    if lyrics.is_some() { "cannot take" } else { "requires" }
                )))
            }
            (_, Some(l)) => {
                let ls = g.shape(l);
                if ls.len() != 3 || ls[0] != shape[0] || ls[2] != shape[2] {
                    return Err(Error::dim("lyrics features", &shape, ls));
                }
            }
            _ => {}
        }
        let w = self.config.width;
        let x = self.input_scaler.forward(g, store, mix)?;
        let x = self.fc1.forward(g, store, x)?;
        let x = self.bn1.forward(g, store, x, bn)?;
        let x = g.tanh(x);
        let x = match (&self.hook, lyrics) {
            (Hook::Local { proj, w_f, w_g }, Some(l)) => {
                let lp = proj.forward(g, store, l)?;
                let l1 = g.slice_channels(lp, 0, w)?;
                let l2 = g.slice_channels(lp, w, w)?;
                let (wf, wg) = (g.param(store, w_f.w), g.param(store, w_g.w));
                local_condition(g, x, l1, l2, wf, wg)?
            }
            (Hook::Concat { proj }, Some(l)) => {
                let lf = proj.forward(g, store, l)?;
                concat_condition(g, x, lf)?
            }
            _ => x,
        };
        let mut h = x;
        for l in &self.lstms {
            h = l.forward(g, store, h)?;
        }
        let x = g.concat_channels(&[x, h])?;
        let x = self.fc2.forward(g, store, x)?;
        let x = self.bn2.forward(g, store, x, bn)?;
        let x = g.relu(x);
        let x = self.fc3.forward(g, store, x)?;
        let x = self.bn3.forward(g, store, x, bn)?;
        let x = self.output_scaler.forward(g, store, x)?;
        Ok(g.relu(x))
    }
}

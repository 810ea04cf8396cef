//! A separator plus optional lyrics encoder sharing one parameter store.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::gradcheck::{check_store, random_tensor, GradCheckReport};
use crate::autodiff::{Graph, Var};
use crate::encoder::{Encoder, EncoderConfig, LayerSpec};
use crate::error::{Error, Result};
use crate::lyrics::{va_labels, FrameLabels, PhonemeVocabulary};
use crate::nn::BnUpdates;
use crate::separator::{Separator, SeparatorConfig, Variant};
use crate::tensor::{ParamStore, Tensor};

/// What the encoder is fed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// No encoder (baseline).
    None,
    /// All-silence IDs regardless of the lyrics.
    Zeros,
    /// Binary vocal activity derived from the lyrics.
    Va,
    /// Aligned phoneme IDs.
    Lyrics,
}

impl InputMode {
    pub fn tag(self) -> &'static str {
        match self {
            InputMode::None => "none",
            InputMode::Zeros => "zeros",
            InputMode::Va => "va",
            InputMode::Lyrics => "lyrics",
        }
    }

    /// Whether aligned lyrics must be available for this mode.
    pub fn needs_labels(self) -> bool {
        matches!(self, InputMode::Va | InputMode::Lyrics)
    }
}

/// Encoder input for `mode`, or `None` when the model has no encoder.
pub fn build_conditioning_input(mode: InputMode, labels: Option<&FrameLabels>, frames: usize) -> Result<Option<FrameLabels>> {
    let need = |l: Option<&FrameLabels>| {
        l.cloned().ok_or_else(|| {
            Error::Input(format!("input mode `{}` needs aligned lyrics but none were given", mode.tag()))
        })
    };
    Ok(match mode {
        InputMode::None => None,
        InputMode::Zeros => Some(FrameLabels::silence(frames)),
        InputMode::Va => Some(FrameLabels {
            ids: va_labels(&need(labels)?).into_iter().map(usize::from).collect(),
        }),
        InputMode::Lyrics => Some(need(labels)?),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub input_mode: InputMode,
    pub separator: SeparatorConfig,
    #[serde(default)]
    pub encoder: EncoderConfig,
}

impl ModelSpec {
    pub fn variant(&self) -> Variant {
        self.separator.variant
    }

    /// Short name such as `cc-lyrics` or `baseline`.
    pub fn tag(&self) -> String {
        match self.input_mode {
            InputMode::None => self.variant().tag().to_string(),
            m => format!("{}-{}", self.variant().tag(), m.tag()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.separator.validate()?;
        match (self.variant(), self.input_mode) {
            (Variant::Baseline, InputMode::None) => Ok(()),
            (Variant::Baseline, m) => Err(Error::Variant(format!(
                "baseline model cannot use input mode `{}`",
                m.tag()
            ))),
            (v, InputMode::None) => Err(Error::Variant(format!("{} model needs an input mode", v.tag()))),
            _ => self.encoder.validate(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ModelBundle {
    pub spec: ModelSpec,
    /// Encoder vocabulary; absent for the baseline.
    pub vocabulary: Option<PhonemeVocabulary>,
    pub store: ParamStore,
    pub encoder: Option<Encoder>,
    pub separator: Separator,
}

impl ModelBundle {
    /// `lyrics_vocab` is required for lyrics-mode models; VA and zeros modes
    /// use the two-symbol activity vocabulary.
    pub fn new(spec: &ModelSpec, lyrics_vocab: Option<&PhonemeVocabulary>, seed: u64) -> Result<Self> {
        spec.validate()?;
        let vocabulary = match spec.input_mode {
            InputMode::None => None,
            InputMode::Zeros | InputMode::Va => Some(PhonemeVocabulary::vocal_activity()),
            InputMode::Lyrics => Some(
                lyrics_vocab
                    .ok_or_else(|| Error::Config("a lyrics-mode model needs a phoneme vocabulary".into()))?
                    .clone(),
            ),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let encoder = match &vocabulary {
            Some(v) => Some(Encoder::new(&mut store, "encoder", &spec.encoder, v.len(), &mut rng)?),
            None => None,
        };
        let separator = Separator::new(
            &mut store,
            "separator",
            &spec.separator,
            encoder.as_ref().map(|e| e.config.output_dim()),
            &mut rng,
        )?;
        Ok(ModelBundle {
            spec: spec.clone(),
            vocabulary,
            store,
            encoder,
            separator,
        })
    }

    pub fn vocab_size(&self) -> Option<usize> {
        self.vocabulary.as_ref().map(PhonemeVocabulary::len)
    }

    /// `mix: [B, F, T]`; `cond` holds `B * T` encoder IDs, batch-major.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        mix: Var,
        cond: Option<&[usize]>,
        bn: &mut BnUpdates,
    ) -> Result<Var> {
        let batch = g.shape(mix)[0];
        let lyrics = match (&self.encoder, cond) {
            (Some(enc), Some(ids)) => Some(enc.forward(g, store, ids, batch)?),
            (None, None) => None,
            (Some(_), None) => {
                return Err(Error::Variant(format!(
                    "model `{}` needs conditioning input",
                    self.spec.tag()
                )))
            }
            (None, Some(_)) => {
                return Err(Error::Variant("baseline model cannot take conditioning input".into()))
            }
        };
        self.separator.forward(g, store, mix, lyrics, bn)
    }

    /// Eval-mode estimate for one track. `mix` is bin-major `[F x frames]`;
    /// `labels` are the aligned lyrics (possibly corrupted) when the input
    /// mode needs them.
    pub fn separate(&self, mix: &[f64], frames: usize, labels: Option<&FrameLabels>) -> Result<Vec<f64>> {
        let f = self.spec.separator.freq_bins;
        let input = Tensor::new(&[1, f, frames], mix.to_vec())?;
        if let Some(l) = labels {
            if l.len() != frames {
                return Err(Error::dim("labels", &[frames], &[l.len()]));
            }
        }
        let cond = build_conditioning_input(self.spec.input_mode, labels, frames)?;
        if let (Some(c), Some(n)) = (&cond, self.vocab_size()) {
            c.validate(n)?;
        }
        let mut g = Graph::eval();
        let x = g.input(&input);
        let y = self.forward(&mut g, &self.store, x, cond.as_ref().map(|c| c.ids.as_slice()), &mut BnUpdates::new())?;
        Ok(g.value(y).to_vec())
    }
}

/// The seven trained combinations: baseline, and each conditioned variant
/// with zeros, VA and lyrics input.
pub fn model_catalogue() -> Vec<(Variant, InputMode)> {
    let mut v = vec![(Variant::Baseline, InputMode::None)];
    for variant in [Variant::LocalCond, Variant::Concat] {
        for mode in [InputMode::Zeros, InputMode::Va, InputMode::Lyrics] {
            v.push((variant, mode));
        }
    }
    v
}

/// Finite-difference check of every trainable parameter of tiny baseline,
/// LC and CC lyrics models, encoder included.
pub fn gradcheck_models(seed: u64) -> Result<Vec<GradCheckReport>> {
    let vocab = PhonemeVocabulary::new(&["a", "k", "s"])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (b, f, t) = (2, 7, 6);
    let mix = Tensor::new(&[b, f, t], random_tensor(&[b, f, t], &mut rng).data().iter().map(|v| v.abs()).collect())?;
    let target = Tensor::from_fn(&[b, f, t], |i| 0.5 + 0.1 * (i % 5) as f64);
    let ids: Vec<usize> = (0..b * t).map(|i| (i * 7 + 3) % vocab.len()).collect();
    let mut reports = Vec::new();
    for (variant, mode) in [
        (Variant::Baseline, InputMode::None),
        (Variant::LocalCond, InputMode::Lyrics),
        (Variant::Concat, InputMode::Lyrics),
    ] {
        let spec = ModelSpec {
            input_mode: mode,
            separator: SeparatorConfig {
                freq_bins: f,
                width: 6,
                lstm_layers: 2,
                ..SeparatorConfig::new(variant)
            },
            encoder: EncoderConfig {
                embedding_dim: 3,
                channels: 4,
                layers: vec![LayerSpec::conv(1), LayerSpec::highway(3, 1), LayerSpec::highway(3, 3)],
                dropout: 0.1,
            },
        };
        let model = ModelBundle::new(&spec, Some(&vocab), seed)?;
        let mut store = model.store.clone();
        // keep the final ReLU mostly active
        let shift = store.name(model.separator.output_scaler.shift).to_string();
        store.set_data(&shift, vec![2.0; f])?;
        let cond = model.encoder.as_ref().map(|_| ids.as_slice());
        reports.push(check_store(&spec.tag(), &mut store, seed, |g, s| {
            let m = g.input(&mix);
            let y = model.forward(g, s, m, cond, &mut BnUpdates::new())?;
            let t = g.input(&target);
            g.mse(y, t)
        })?);
    }
    Ok(reports)
}

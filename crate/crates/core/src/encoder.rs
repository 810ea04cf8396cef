//! Highway-network lyrics encoder: phoneme embedding, pointwise convolutions
//! and dilated highway blocks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::lyrics::FrameLabels;
use crate::nn::Conv;
use crate::tensor::{ParamId, ParamStore, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    /// Convolution, ReLU, dropout.
    Conv,
    /// Gated residual block; keeps the channel count.
    Highway,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub kernel: usize,
    pub dilation: usize,
}

impl LayerSpec {
    pub const fn conv(kernel: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Conv,
            kernel,
            dilation: 1,
        }
    }

    pub const fn highway(kernel: usize, dilation: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Highway,
            kernel,
            dilation,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub embedding_dim: usize,
    pub channels: usize,
    #[serde(default = "default_stack")]
    pub layers: Vec<LayerSpec>,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
}

fn default_dropout() -> f64 {
    0.05
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            embedding_dim: 128,
            channels: 256,
            layers: default_stack(),
            dropout: default_dropout(),
        }
    }
}

impl EncoderConfig {
    pub fn output_dim(&self) -> usize {
        self.channels
    }

    pub fn receptive_field(&self) -> usize {
        receptive_field(&self.layers)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("encoder layer stack is empty".into()));
        }
        if self.embedding_dim == 0 || self.channels == 0 {
            return Err(Error::Config("encoder widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("encoder dropout {} outside [0, 1)", self.dropout)));
        }
        for l in &self.layers {
            crate::autodiff::check_conv_geometry(l.kernel, l.dilation)?;
        }
        if self.layers[0].kind == LayerKind::Highway && self.embedding_dim != self.channels {
            return Err(Error::Config(format!(
                "a leading highway block needs embedding_dim == channels ({} vs {})",
                self.embedding_dim, self.channels
            )));
        }
        Ok(())
    }
}

/// Pointwise convs, dilated highway blocks 1,3,9,27 twice, two K=3 blocks and
/// two pointwise blocks.
pub fn default_stack() -> Vec<LayerSpec> {
    let mut s = vec![LayerSpec::conv(1), LayerSpec::conv(1)];
    for _ in 0..2 {
        for d in [1, 3, 9, 27] {
            s.push(LayerSpec::highway(3, d));
        }
    }
    s.extend([LayerSpec::highway(3, 1); 2]);
    s.extend([LayerSpec::highway(1, 1); 2]);
    s
}

/// The same stack with every dilation set to 1.
pub fn undilated(stack: &[LayerSpec]) -> Vec<LayerSpec> {
    stack.iter().map(|l| LayerSpec { dilation: 1, ..*l }).collect()
}

/// `1 + sum (kernel - 1) * dilation`.
pub fn receptive_field(stack: &[LayerSpec]) -> usize {
    1 + stack.iter().map(|l| (l.kernel - 1) * l.dilation).sum::<usize>()
}

/// `y = ReLU(x * W_H) . sigma(x * W_T) + x . (1 - sigma(x * W_T))`, with
/// dropout on the ReLU output.
pub fn highway(g: &mut Graph, x: Var, w_h: Var, w_t: Var, dilation: usize, dropout: f64) -> Result<Var> {
    let c = g.shape(x)[1];
    for w in [w_h, w_t] {
        let ws = g.shape(w);
        if ws.len() != 3 || ws[0] != c || ws[1] != c {
            return Err(Error::dim("highway", g.shape(x), g.shape(w)));
        }
    }
    let h = g.conv1d(x, w_h, dilation)?;
    let h = g.relu(h);
    let h = g.dropout(h, dropout)?;
    let t = g.conv1d(x, w_t, dilation)?;
    let gate = g.sigmoid(t);
    let carry = g.affine(gate, -1.0, 1.0);
    let a = g.mul(h, gate)?;
    let b = g.mul(x, carry)?;
    g.add(a, b)
}

#[derive(Clone, Debug)]
enum Layer {
    Conv(Conv),
    Highway { h: Conv, t: Conv },
}

#[derive(Clone, Debug)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub vocab_size: usize,
    pub embedding: ParamId,
    layers: Vec<Layer>,
}

impl Encoder {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        config: &EncoderConfig,
        vocab_size: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        config.validate()?;
        if vocab_size < 2 {
            return Err(Error::Config(format!("encoder vocabulary of size {vocab_size}")));
        }
        let e = config.embedding_dim;
        let bound = 3f64.sqrt();
        let embedding = store.add_param(
            &format!("{prefix}.embedding"),
            Tensor::from_fn(&[vocab_size, e], |_| rng.gen_range(-bound..bound)),
        );
        let mut width = e;
        let mut layers = Vec::new();
        for (k, l) in config.layers.iter().enumerate() {
            let c = config.channels;
            let name = format!("{prefix}.layer{k}");
            layers.push(match l.kind {
                LayerKind::Conv => {
                    let conv = Conv::new(store, &name, (width, c), l.kernel, l.dilation, rng)?;
                    width = c;
                    Layer::Conv(conv)
                }
                LayerKind::Highway => {
                    if width != c {
                        return Err(Error::Config(format!("highway block {k} receives {width} channels, needs {c}")));
                    }
                    Layer::Highway {
                        h: Conv::new(store, &format!("{name}.h"), (c, c), l.kernel, l.dilation, rng)?,
                        t: Conv::new(store, &format!("{name}.t"), (c, c), l.kernel, l.dilation, rng)?,
                    }
                }
            });
        }
        if width != config.channels {
            return Err(Error::Config("encoder stack never reaches the channel width".into()));
        }
        Ok(Encoder {
            config: config.clone(),
            vocab_size,
            embedding,
            layers,
        })
    }

    /// `[B, embedding_dim, T]` embedding of `batch` equal-length sequences
    /// stored back to back in `ids`.
    pub fn embed(&self, g: &mut Graph, store: &ParamStore, ids: &[usize], batch: usize) -> Result<Var> {
        let table = g.param(store, self.embedding);
        g.embedding(table, ids, batch)
    }

    /// `[B, channels, T]`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, ids: &[usize], batch: usize) -> Result<Var> {
        if ids.is_empty() {
            return Err(Error::Input("cannot encode an empty label sequence".into()));
        }
        let mut x = self.embed(g, store, ids, batch)?;
        let p = self.config.dropout;
        for layer in &self.layers {
            x = match layer {
                Layer::Conv(c) => {
                    let y = c.forward(g, store, x)?;
                    let y = g.relu(y);
                    g.dropout(y, p)?
                }
                Layer::Highway { h, t } => {
                    let (wh, wt) = (g.param(store, h.w), g.param(store, t.w));
                    highway(g, x, wh, wt, h.dilation, p)?
                }
            };
        }
        Ok(x)
    }

    /// Eval-mode encoding of one sequence as a `[channels, T]` tensor.
    pub fn encode(&self, store: &ParamStore, labels: &FrameLabels) -> Result<Tensor> {
        let mut g = Graph::eval();
        let y = self.forward(&mut g, store, &labels.ids, 1)?;
        let t = labels.len();
        Tensor::new(&[self.config.channels, t], g.value(y).to_vec())
    }
}

/// Measures the receptive field empirically: encodes a random sequence, then
/// for each offset swaps one input label at that distance from the centre
/// frame and reports whether the centre output moved.
pub fn perturbation_probe(encoder: &Encoder, store: &ParamStore, offsets: &[usize], seed: u64) -> Result<Vec<bool>> {
    let max = offsets.iter().copied().max().unwrap_or(0);
    let t = 2 * max + 3;
    let centre = t / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: Vec<usize> = (0..t).map(|_| rng.gen_range(0..encoder.vocab_size)).collect();
    let c = encoder.config.channels;
    let column = |ids: &[usize]| -> Result<Vec<f64>> {
        let y = encoder.encode(store, &FrameLabels { ids: ids.to_vec() })?;
        Ok((0..c).map(|ch| y.data()[ch * t + centre]).collect())
    };
    let reference = column(&base)?;
    offsets
        .iter()
        .map(|&off| {
            let mut changed = false;
            for pos in [centre - off, centre + off] {
                let mut ids = base.clone();
                ids[pos] = (ids[pos] + 1) % encoder.vocab_size;
                changed |= column(&ids)? != reference;
            }
            Ok(changed)
        })
        .collect()
}

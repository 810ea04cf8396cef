//! Parameterised layers built on the autodiff primitives.
//!
//! Layers hold [`ParamId`]s into a shared [`ParamStore`]. Training-mode batch
//! norm cannot write running statistics while the store is borrowed, so the
//! new batch statistics are queued in a [`BnUpdates`] list and applied after
//! the step with [`BnUpdates::apply`].

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{AffineOrder, Graph, Var};
use crate::error::Result;
use crate::tensor::{ParamId, ParamStore, Tensor};

/// Running-statistics momentum, matching the common `0.1` convention.
pub const BN_MOMENTUM: f64 = 0.1;

/// Uniform init in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub fn fan_in_uniform(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.gen_range(-bound..bound))
}

/// Bias-free 1-D convolution `[out, in, kernel]`.
#[derive(Clone, Debug)]
pub struct Conv {
    pub w: ParamId,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub dilation: usize,
}

impl Conv {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        (in_ch, out_ch): (usize, usize),
        kernel: usize,
        dilation: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        crate::autodiff::check_conv_geometry(kernel, dilation)?;
        let w = store.add_param(
            &format!("{name}.weight"),
            fan_in_uniform(&[out_ch, in_ch, kernel], in_ch * kernel, rng),
        );
        Ok(Conv {
            w,
            in_ch,
            out_ch,
            kernel,
            dilation,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.w);
        g.conv1d(x, w, self.dilation)
    }
}

#[derive(Clone, Debug)]
pub struct BnUpdate {
    mean_id: ParamId,
    var_id: ParamId,
    mean: Vec<f64>,
    var: Vec<f64>,
}

/// Batch statistics collected during a training forward pass.
#[derive(Clone, Debug, Default)]
pub struct BnUpdates(Vec<BnUpdate>);

impl BnUpdates {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Exponential moving average into the running buffers.
    pub fn apply(self, store: &mut ParamStore) {
        for u in self.0 {
            for (id, batch) in [(u.mean_id, u.mean), (u.var_id, u.var)] {
                let buf = store.get_mut(id).data_mut();
                for (r, b) in buf.iter_mut().zip(batch) {
                    *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub channels: usize,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Self {
        BatchNorm {
            gamma: store.add_param(&format!("{name}.gamma"), Tensor::filled(&[channels], 1.0)),
            beta: store.add_param(&format!("{name}.beta"), Tensor::zeros(&[channels])),
            running_mean: store.add_buffer(&format!("{name}.running_mean"), Tensor::zeros(&[channels])),
            running_var: store.add_buffer(&format!("{name}.running_var"), Tensor::filled(&[channels], 1.0)),
            channels,
        }
    }

    /// Batch statistics in training graphs, running statistics otherwise.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, bn: &mut BnUpdates) -> Result<Var> {
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        if g.is_training() {
            let (y, mean, var) = g.batch_norm_train(x, gamma, beta)?;
            bn.0.push(BnUpdate {
                mean_id: self.running_mean,
                var_id: self.running_var,
                mean,
                var,
            });
            Ok(y)
        } else {
            let mean = store.get(self.running_mean).data().to_vec();
            let var = store.get(self.running_var).data().to_vec();
            g.batch_norm_eval(x, gamma, beta, &mean, &var)
        }
    }
}

/// Per-channel trainable shift and scale.
#[derive(Clone, Debug)]
pub struct Scaler {
    pub shift: ParamId,
    pub scale: ParamId,
    pub order: AffineOrder,
}

impl Scaler {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize, order: AffineOrder) -> Self {
        Scaler {
            shift: store.add_param(&format!("{name}.shift"), Tensor::zeros(&[channels])),
            scale: store.add_param(&format!("{name}.scale"), Tensor::filled(&[channels], 1.0)),
            order,
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let shift = g.param(store, self.shift);
        let scale = g.param(store, self.scale);
        g.channel_affine(x, shift, scale, self.order)
    }

    pub fn set(&self, store: &mut ParamStore, shift: &[f64], scale: &[f64]) -> Result<()> {
        let shift_name = store.name(self.shift).to_string();
        let scale_name = store.name(self.scale).to_string();
        store.set_data(&shift_name, shift.to_vec())?;
        store.set_data(&scale_name, scale.to_vec())
    }
}

/// One bidirectional LSTM layer: two directional passes concatenated on the
/// channel axis (forward first).
#[derive(Clone, Debug)]
pub struct Blstm {
    dirs: [(ParamId, ParamId, ParamId); 2],
    pub input: usize,
    pub hidden: usize,
}

impl Blstm {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut dir = |tag: &str| {
            let p = format!("{name}.{tag}");
            (
                store.add_param(&format!("{p}.w_ih"), fan_in_uniform(&[4 * hidden, input], hidden, rng)),
                store.add_param(&format!("{p}.w_hh"), fan_in_uniform(&[4 * hidden, hidden], hidden, rng)),
                store.add_param(&format!("{p}.bias"), fan_in_uniform(&[4 * hidden], hidden, rng)),
            )
        };
        let fwd = dir("fwd");
        let bwd = dir("bwd");
        Blstm {
            dirs: [fwd, bwd],
            input,
            hidden,
        }
    }

    pub fn output_width(&self) -> usize {
        2 * self.hidden
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let mut outs = Vec::with_capacity(2);
        for (k, &(w_ih, w_hh, bias)) in self.dirs.iter().enumerate() {
            let (w_ih, w_hh, bias) = (g.param(store, w_ih), g.param(store, w_hh), g.param(store, bias));
            outs.push(g.lstm(x, w_ih, w_hh, bias, k == 1)?);
        }
        g.concat_channels(&outs)
    }
}

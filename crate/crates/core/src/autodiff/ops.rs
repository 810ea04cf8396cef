use rand::Rng;

use super::gemm::{gemm_acc, View};
use super::lstm;
use super::{Graph, Op, Var};
use crate::error::{Error, Result};

/// Batch-norm variance floor.
pub const BN_EPS: f64 = 1e-5;

/// Order of the per-channel shift and scale in [`Graph::channel_affine`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AffineOrder {
    /// `(x + shift) * scale`
    ShiftThenScale,
    /// `x * scale + shift`
    ScaleThenShift,
}

fn dims3(shape: &[usize], op: &'static str) -> Result<(usize, usize, usize)> {
    match *shape {
        [b, c, t] => Ok((b, c, t)),
        _ => Err(Error::dim(op, shape, &[0, 0, 0])),
    }
}

impl Graph {
    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(x).iter().map(|&v| f(v)).collect();
        let shape = self.shape(x).to_vec();
        let needs = self.needs(x);
        self.push(shape, value, op, needs)
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    /// 2-D matrix product `[m, k] x [k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k, n) = match (self.shape(a), self.shape(b)) {
            (&[m, k], &[k2, n]) if k == k2 => (m, k, n),
            (sa, sb) => return Err(Error::dim("matmul", sa, sb)),
        };
        let mut out = vec![0.0; m * n];
        gemm_acc(
            1.0,
            self.value(a),
            View::rm(0, m, k),
            self.value(b),
            View::rm(0, k, n),
            &mut out,
            View::rm(0, m, n),
        );
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b), needs))
    }

    /// Dilated 1-D convolution with symmetric zero padding so the output keeps
    /// the input length. `x: [B, I, T]`, `w: [O, I, K]` with odd `K`.
    pub fn conv1d(&mut self, x: Var, w: Var, dilation: usize) -> Result<Var> {
        let (b, i, t) = dims3(self.shape(x), "conv1d")?;
        let (o, wi, k) = dims3(self.shape(w), "conv1d")?;
        if wi != i {
            return Err(Error::dim("conv1d", self.shape(x), self.shape(w)));
        }
        check_conv_geometry(k, dilation)?;
        let mut out = vec![0.0; b * o * t];
        let pad = (k - 1) / 2 * dilation;
        for bi in 0..b {
            for tap in 0..k {
                let Some((lo, hi, src)) = tap_range(tap, dilation, pad, t) else {
                    continue;
                };
                gemm_acc(
                    1.0,
                    self.value(w),
                    View {
                        offset: tap,
                        rows: o,
                        cols: i,
                        rs: i * k,
                        cs: k,
                    },
                    self.value(x),
                    View {
                        offset: bi * i * t + src,
                        rows: i,
                        cols: hi - lo,
                        rs: t,
                        cs: 1,
                    },
                    &mut out,
                    View {
                        offset: bi * o * t + lo,
                        rows: o,
                        cols: hi - lo,
                        rs: t,
                        cs: 1,
                    },
                );
            }
        }
        let needs = self.needs(x) || self.needs(w);
        Ok(self.push(vec![b, o, t], out, Op::Conv1d { x, w, dilation }, needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let value = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(self.shape(a).to_vec(), value, Op::Add(a, b), needs))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let value = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(self.shape(a).to_vec(), value, Op::Mul(a, b), needs))
    }

    /// Scalar affine map `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        self.unary(x, |v| scale * v + shift, Op::Affine { x, scale })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    /// Inverted dropout. Identity in eval mode or at rate 0.
    pub fn dropout(&mut self, x: Var, rate: f64) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !self.training || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let n = self.value(x).len();
        let mask: Vec<f64> = (0..n)
            .map(|_| if self.rng().gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let value = self.value(x).iter().zip(&mask).map(|(v, m)| v * m).collect();
        let needs = self.needs(x);
        Ok(self.push(self.shape(x).to_vec(), value, Op::Dropout { x, mask }, needs))
    }

    /// Batch normalization over the batch and frame axes using batch
    /// statistics. Returns the output plus the batch mean and unbiased
    /// variance per channel for running-statistics updates.
    pub fn batch_norm_train(&mut self, x: Var, gamma: Var, beta: Var) -> Result<(Var, Vec<f64>, Vec<f64>)> {
        let (b, c, t) = dims3(self.shape(x), "batch_norm")?;
        self.check_channel_vec(gamma, c, "batch_norm")?;
        self.check_channel_vec(beta, c, "batch_norm")?;
        let n = (b * t) as f64;
        let xs = self.value(x);
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for bi in 0..b {
            for ci in 0..c {
                let row = &xs[(bi * c + ci) * t..][..t];
                mean[ci] += row.iter().sum::<f64>();
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        for bi in 0..b {
            for ci in 0..c {
                let row = &xs[(bi * c + ci) * t..][..t];
                var[ci] += row.iter().map(|v| (v - mean[ci]).powi(2)).sum::<f64>();
            }
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v / n + BN_EPS).sqrt()).collect();
        let unbiased: Vec<f64> = var.iter().map(|v| if n > 1.0 { v / (n - 1.0) } else { 0.0 }).collect();
        let (out, xhat) = self.normalize(x, gamma, beta, &mean, &inv_std, (b, c, t));
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        let v = self.push(
            vec![b, c, t],
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats: true,
            },
            needs,
        );
        Ok((v, mean, unbiased))
    }

    /// Batch normalization with fixed statistics: a per-channel affine map.
    pub fn batch_norm_eval(&mut self, x: Var, gamma: Var, beta: Var, mean: &[f64], var: &[f64]) -> Result<Var> {
        let (b, c, t) = dims3(self.shape(x), "batch_norm")?;
        self.check_channel_vec(gamma, c, "batch_norm")?;
        self.check_channel_vec(beta, c, "batch_norm")?;
        if mean.len() != c || var.len() != c {
            return Err(Error::dim("batch_norm", &[c], &[mean.len(), var.len()]));
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let (out, xhat) = self.normalize(x, gamma, beta, mean, &inv_std, (b, c, t));
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        Ok(self.push(
            vec![b, c, t],
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats: false,
            },
            needs,
        ))
    }

    fn normalize(
        &self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[f64],
        inv_std: &[f64],
        (b, c, t): (usize, usize, usize),
    ) -> (Vec<f64>, Vec<f64>) {
        let xs = self.value(x);
        let g = self.value(gamma);
        let be = self.value(beta);
        let mut xhat = vec![0.0; xs.len()];
        let mut out = vec![0.0; xs.len()];
        for bi in 0..b {
            for ci in 0..c {
                let base = (bi * c + ci) * t;
                for ti in 0..t {
                    let h = (xs[base + ti] - mean[ci]) * inv_std[ci];
                    xhat[base + ti] = h;
                    out[base + ti] = g[ci] * h + be[ci];
                }
            }
        }
        (out, xhat)
    }

    fn check_channel_vec(&self, v: Var, c: usize, op: &'static str) -> Result<()> {
        if self.shape(v) != [c] {
            return Err(Error::dim(op, self.shape(v), &[c]));
        }
        Ok(())
    }

    /// Per-channel affine transform of `[B, C, T]` by `[C]` vectors.
    pub fn channel_affine(&mut self, x: Var, shift: Var, scale: Var, order: AffineOrder) -> Result<Var> {
        let (b, c, t) = dims3(self.shape(x), "channel_affine")?;
        self.check_channel_vec(shift, c, "channel_affine")?;
        self.check_channel_vec(scale, c, "channel_affine")?;
        let xs = self.value(x);
        let sh = self.value(shift);
        let sc = self.value(scale);
        let mut out = vec![0.0; xs.len()];
        for bi in 0..b {
            for ci in 0..c {
                let base = (bi * c + ci) * t;
                for ti in 0..t {
                    out[base + ti] = match order {
                        AffineOrder::ShiftThenScale => (xs[base + ti] + sh[ci]) * sc[ci],
                        AffineOrder::ScaleThenShift => xs[base + ti] * sc[ci] + sh[ci],
                    };
                }
            }
        }
        let needs = self.needs(x) || self.needs(shift) || self.needs(scale);
        Ok(self.push(
            vec![b, c, t],
            out,
            Op::ChannelAffine { x, shift, scale, order },
            needs,
        ))
    }

    /// Concatenation along the channel axis.
    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::Input("concat of zero tensors".into()))?;
        let (b, _, t) = dims3(self.shape(first), "concat")?;
        let mut total = 0;
        for &p in parts {
            let (pb, pc, pt) = dims3(self.shape(p), "concat")?;
            if pb != b || pt != t {
                return Err(Error::dim("concat", self.shape(first), self.shape(p)));
            }
            total += pc;
        }
        let mut out = Vec::with_capacity(b * total * t);
        for bi in 0..b {
            for &p in parts {
                let pc = self.shape(p)[1];
                out.extend_from_slice(&self.value(p)[bi * pc * t..(bi + 1) * pc * t]);
            }
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(vec![b, total, t], out, Op::Concat(parts.to_vec()), needs))
    }

    /// Channels `[start, start + len)` of a `[B, C, T]` tensor.
    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (b, c, t) = dims3(self.shape(x), "slice_channels")?;
        if start + len > c {
            return Err(Error::dim("slice_channels", self.shape(x), &[start, len]));
        }
        let mut out = Vec::with_capacity(b * len * t);
        for bi in 0..b {
            out.extend_from_slice(&self.value(x)[(bi * c + start) * t..(bi * c + start + len) * t]);
        }
        let needs = self.needs(x);
        Ok(self.push(vec![b, len, t], out, Op::Slice { x, start }, needs))
    }

    /// Table lookup: `table: [V, E]`, `ids` laid out `[batch, frames]`.
    /// Output `[batch, E, frames]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize], batch: usize) -> Result<Var> {
        let (v, e) = match *self.shape(table) {
            [v, e] => (v, e),
            _ => return Err(Error::dim("embedding", self.shape(table), &[0, 0])),
        };
        if batch == 0 || ids.len() % batch != 0 {
            return Err(Error::dim("embedding", &[ids.len()], &[batch]));
        }
        if let Some(&bad) = ids.iter().find(|&&id| id >= v) {
            return Err(Error::Index {
                what: "embedding table",
                index: bad,
                size: v,
            });
        }
        let t = ids.len() / batch;
        let tab = self.value(table);
        let mut out = vec![0.0; batch * e * t];
        for bi in 0..batch {
            for ti in 0..t {
                let row = &tab[ids[bi * t + ti] * e..][..e];
                for (ei, &val) in row.iter().enumerate() {
                    out[(bi * e + ei) * t + ti] = val;
                }
            }
        }
        let needs = self.needs(table);
        Ok(self.push(
            vec![batch, e, t],
            out,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            needs,
        ))
    }

    /// One directional LSTM pass over `[B, I, T]`; gate order input, forget,
    /// cell, output. `w_ih: [4H, I]`, `w_hh: [4H, H]`, `bias: [4H]`.
    pub fn lstm(&mut self, x: Var, w_ih: Var, w_hh: Var, bias: Var, reverse: bool) -> Result<Var> {
        let (b, i, t) = dims3(self.shape(x), "lstm")?;
        let (g4, wi) = match *self.shape(w_ih) {
            [g, wi] => (g, wi),
            _ => return Err(Error::dim("lstm", self.shape(w_ih), &[0, i])),
        };
        if wi != i || g4 % 4 != 0 || g4 == 0 {
            return Err(Error::dim("lstm", self.shape(x), self.shape(w_ih)));
        }
        let h = g4 / 4;
        if self.shape(w_hh) != [g4, h] {
            return Err(Error::dim("lstm", self.shape(w_hh), &[g4, h]));
        }
        self.check_channel_vec(bias, g4, "lstm")?;
        let (out, cache) = lstm::forward(
            self.value(x),
            self.value(w_ih),
            self.value(w_hh),
            self.value(bias),
            (b, i, t, h),
            reverse,
        );
        let needs = [x, w_ih, w_hh, bias].iter().any(|&v| self.needs(v));
        Ok(self.push(
            vec![b, h, t],
            out,
            Op::Lstm {
                x,
                w_ih,
                w_hh,
                bias,
                reverse,
                cache,
            },
            needs,
        ))
    }

    /// Mean squared error, a scalar.
    pub fn mse(&mut self, estimate: Var, target: Var) -> Result<Var> {
        self.same_shape(estimate, target, "mse")?;
        let n = self.value(estimate).len().max(1) as f64;
        let s: f64 = self
            .value(estimate)
            .iter()
            .zip(self.value(target))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let needs = self.needs(estimate) || self.needs(target);
        Ok(self.push(vec![1], vec![s / n], Op::Mse(estimate, target), needs))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        let needs = self.needs(x);
        self.push(vec![1], vec![s], Op::Sum(x), needs)
    }

    /// Vector-Jacobian products of node `i` for each parent needing a gradient.
    pub(super) fn backward_node(&mut self, i: usize, dy: &[f64]) {
        let contributions = self.vjp(i, dy);
        for (v, g) in contributions {
            self.acc(v, g);
        }
    }

    fn vjp(&self, i: usize, dy: &[f64]) -> Vec<(Var, Vec<f64>)> {
        let node = &self.nodes[i];
        let y = &node.value;
        let mut out = Vec::new();
        let mut emit = |v: Var, f: &dyn Fn() -> Vec<f64>| {
            if self.needs(v) {
                out.push((v, f()));
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                emit(*a, &|| {
                    let mut g = vec![0.0; m * k];
                    gemm_acc(1.0, dy, View::rm(0, m, n), self.value(*b), View::rm(0, k, n).t(), &mut g, View::rm(0, m, k));
                    g
                });
                emit(*b, &|| {
                    let mut g = vec![0.0; k * n];
                    gemm_acc(1.0, self.value(*a), View::rm(0, m, k).t(), dy, View::rm(0, m, n), &mut g, View::rm(0, k, n));
                    g
                });
            }
            Op::Conv1d { x, w, dilation } => {
                let (b, ic, t) = dims3(self.shape(*x), "conv1d").unwrap();
                let (o, _, k) = dims3(self.shape(*w), "conv1d").unwrap();
                let d = *dilation;
                let pad = (k - 1) / 2 * d;
                emit(*x, &|| {
                    let mut g = vec![0.0; b * ic * t];
                    for bi in 0..b {
                        for tap in 0..k {
                            let Some((lo, hi, src)) = tap_range(tap, d, pad, t) else {
                                continue;
                            };
                            gemm_acc(
                                1.0,
                                self.value(*w),
                                View { offset: tap, rows: o, cols: ic, rs: ic * k, cs: k }.t(),
                                dy,
                                View { offset: bi * o * t + lo, rows: o, cols: hi - lo, rs: t, cs: 1 },
                                &mut g,
                                View { offset: bi * ic * t + src, rows: ic, cols: hi - lo, rs: t, cs: 1 },
                            );
                        }
                    }
                    g
                });
                emit(*w, &|| {
                    let mut g = vec![0.0; o * ic * k];
                    for bi in 0..b {
                        for tap in 0..k {
                            let Some((lo, hi, src)) = tap_range(tap, d, pad, t) else {
                                continue;
                            };
                            gemm_acc(
                                1.0,
                                dy,
                                View { offset: bi * o * t + lo, rows: o, cols: hi - lo, rs: t, cs: 1 },
                                self.value(*x),
                                View { offset: bi * ic * t + src, rows: ic, cols: hi - lo, rs: t, cs: 1 }.t(),
                                &mut g,
                                View { offset: tap, rows: o, cols: ic, rs: ic * k, cs: k },
                            );
                        }
                    }
                    g
                });
            }
            Op::Add(a, b) => {
                emit(*a, &|| dy.to_vec());
                emit(*b, &|| dy.to_vec());
            }
            Op::Mul(a, b) => {
                emit(*a, &|| dy.iter().zip(self.value(*b)).map(|(g, v)| g * v).collect());
                emit(*b, &|| dy.iter().zip(self.value(*a)).map(|(g, v)| g * v).collect());
            }
            Op::Affine { x, scale } => emit(*x, &|| dy.iter().map(|g| g * scale).collect()),
            Op::Sigmoid(x) => emit(*x, &|| dy.iter().zip(y).map(|(g, s)| g * s * (1.0 - s)).collect()),
            Op::Tanh(x) => emit(*x, &|| dy.iter().zip(y).map(|(g, s)| g * (1.0 - s * s)).collect()),
            Op::Relu(x) => emit(*x, &|| {
                dy.iter()
                    .zip(self.value(*x))
                    .map(|(g, v)| if *v > 0.0 { *g } else { 0.0 })
                    .collect()
            }),
            Op::Dropout { x, mask } => emit(*x, &|| dy.iter().zip(mask).map(|(g, m)| g * m).collect()),
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let (b, c, t) = dims3(&node.shape, "batch_norm").unwrap();
                let n = (b * t) as f64;
                let mut sum_dy = vec![0.0; c];
                let mut sum_dy_xhat = vec![0.0; c];
                for bi in 0..b {
                    for ci in 0..c {
                        let base = (bi * c + ci) * t;
                        for ti in 0..t {
                            sum_dy[ci] += dy[base + ti];
                            sum_dy_xhat[ci] += dy[base + ti] * xhat[base + ti];
                        }
                    }
                }
                let g = self.value(*gamma);
                emit(*x, &|| {
                    let mut dx = vec![0.0; dy.len()];
                    for bi in 0..b {
                        for ci in 0..c {
                            let base = (bi * c + ci) * t;
                            for ti in 0..t {
                                dx[base + ti] = if *batch_stats {
                                    g[ci] * inv_std[ci] / n
                                        * (n * dy[base + ti] - sum_dy[ci] - xhat[base + ti] * sum_dy_xhat[ci])
                                } else {
                                    g[ci] * inv_std[ci] * dy[base + ti]
                                };
                            }
                        }
                    }
                    dx
                });
                emit(*gamma, &|| sum_dy_xhat.clone());
                emit(*beta, &|| sum_dy.clone());
            }
            Op::ChannelAffine { x, shift, scale, order } => {
                let (b, c, t) = dims3(&node.shape, "channel_affine").unwrap();
                let xs = self.value(*x);
                let sh = self.value(*shift);
                let sc = self.value(*scale);
                let per_channel = |f: &dyn Fn(usize, f64, f64) -> f64| {
                    let mut g = vec![0.0; c];
                    for bi in 0..b {
                        for ci in 0..c {
                            let base = (bi * c + ci) * t;
                            for ti in 0..t {
                                g[ci] += f(ci, dy[base + ti], xs[base + ti]);
                            }
                        }
                    }
                    g
                };
                emit(*x, &|| {
                    let mut g = vec![0.0; dy.len()];
                    for bi in 0..b {
                        for ci in 0..c {
                            let base = (bi * c + ci) * t;
                            for ti in 0..t {
                                g[base + ti] = dy[base + ti] * sc[ci];
                            }
                        }
                    }
                    g
                });
                match order {
                    AffineOrder::ShiftThenScale => {
                        emit(*shift, &|| per_channel(&|ci, g, _| g * sc[ci]));
                        emit(*scale, &|| per_channel(&|ci, g, v| g * (v + sh[ci])));
                    }
                    AffineOrder::ScaleThenShift => {
                        emit(*shift, &|| per_channel(&|_, g, _| g));
                        emit(*scale, &|| per_channel(&|_, g, v| g * v));
                    }
                }
            }
            Op::Concat(parts) => {
                let (b, total, t) = dims3(&node.shape, "concat").unwrap();
                let mut offset = 0;
                for &p in parts {
                    let pc = self.shape(p)[1];
                    emit(p, &|| {
                        let mut g = Vec::with_capacity(b * pc * t);
                        for bi in 0..b {
                            g.extend_from_slice(&dy[(bi * total + offset) * t..(bi * total + offset + pc) * t]);
                        }
                        g
                    });
                    offset += pc;
                }
            }
            Op::Slice { x, start } => {
                let (b, c, t) = dims3(self.shape(*x), "slice").unwrap();
                let len = node.shape[1];
                emit(*x, &|| {
                    let mut g = vec![0.0; b * c * t];
                    for bi in 0..b {
                        g[(bi * c + start) * t..(bi * c + start + len) * t]
                            .copy_from_slice(&dy[bi * len * t..(bi + 1) * len * t]);
                    }
                    g
                });
            }
            Op::Embedding { table, ids } => {
                let (b, e, t) = dims3(&node.shape, "embedding").unwrap();
                let v = self.shape(*table)[0];
                emit(*table, &|| {
                    let mut g = vec![0.0; v * e];
                    for bi in 0..b {
                        for ti in 0..t {
                            let id = ids[bi * t + ti];
                            for ei in 0..e {
                                g[id * e + ei] += dy[(bi * e + ei) * t + ti];
                            }
                        }
                    }
                    g
                });
            }
            Op::Lstm {
                x,
                w_ih,
                w_hh,
                bias,
                reverse,
                cache,
            } => {
                let (b, ic, t) = dims3(self.shape(*x), "lstm").unwrap();
                let h = node.shape[1];
                let grads = lstm::backward(
                    dy,
                    self.value(*x),
                    self.value(*w_ih),
                    self.value(*w_hh),
                    y,
                    cache,
                    (b, ic, t, h),
                    *reverse,
                    self.needs(*x),
                );
                let lstm::LstmGrads { dx, dw_ih, dw_hh, dbias } = grads;
                if let Some(dx) = dx {
                    emit(*x, &|| dx.clone());
                }
                emit(*w_ih, &|| dw_ih.clone());
                emit(*w_hh, &|| dw_hh.clone());
                emit(*bias, &|| dbias.clone());
            }
            Op::Mse(a, b) => {
                let n = self.value(*a).len().max(1) as f64;
                let diff = |sign: f64| -> Vec<f64> {
                    self.value(*a)
                        .iter()
                        .zip(self.value(*b))
                        .map(|(p, q)| sign * 2.0 * (p - q) / n * dy[0])
                        .collect()
                };
                emit(*a, &|| diff(1.0));
                emit(*b, &|| diff(-1.0));
            }
            Op::Sum(x) => {
                let n = self.value(*x).len();
                emit(*x, &|| vec![dy[0]; n]);
            }
        }
        out
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn check_conv_geometry(kernel: usize, dilation: usize) -> Result<()> {
    if dilation == 0 {
        return Err(Error::Config("dilation must be at least 1".into()));
    }
    if kernel == 0 || kernel % 2 == 0 {
        return Err(Error::Config(format!(
            "kernel size {kernel} cannot give symmetric same-length padding"
        )));
    }
    Ok(())
}

/// Output frames `[lo, hi)` that read input frames `[src, src + hi - lo)`
/// through kernel tap `tap`.
fn tap_range(tap: usize, dilation: usize, pad: usize, t: usize) -> Option<(usize, usize, usize)> {
    let shift = (tap * dilation) as isize - pad as isize;
    let lo = (-shift).max(0) as usize;
    let hi = (t as isize - shift).min(t as isize);
    if hi <= lo as isize {
        return None;
    }
    Some((lo, hi as usize, (lo as isize + shift) as usize))
}

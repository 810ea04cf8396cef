//! Directional LSTM forward pass and backpropagation through time.

use super::gemm::{gemm_acc, View};
use super::ops::sigmoid;

#[derive(Debug)]
pub(crate) struct LstmCache {
    /// Activated gates `[B, 4H, T]`.
    acts: Vec<f64>,
    /// Cell states `[B, H, T]`.
    cells: Vec<f64>,
}

pub(crate) struct LstmGrads {
    pub dx: Option<Vec<f64>>,
    pub dw_ih: Vec<f64>,
    pub dw_hh: Vec<f64>,
    pub dbias: Vec<f64>,
}

fn time_at(step: usize, t: usize, reverse: bool) -> usize {
    if reverse {
        t - 1 - step
    } else {
        step
    }
}

pub(crate) fn forward(
    x: &[f64],
    w_ih: &[f64],
    w_hh: &[f64],
    bias: &[f64],
    (b, i, t, h): (usize, usize, usize, usize),
    reverse: bool,
) -> (Vec<f64>, LstmCache) {
    let g4 = 4 * h;
    let mut acts = vec![0.0; b * g4 * t];
    // input projection for every frame at once, stored in `acts` and
    // activated in place below
    for bi in 0..b {
        gemm_acc(
            1.0,
            w_ih,
            View::rm(0, g4, i),
            x,
            View::rm(bi * i * t, i, t),
            &mut acts,
            View::rm(bi * g4 * t, g4, t),
        );
    }
    let mut cells = vec![0.0; b * h * t];
    let mut out = vec![0.0; b * h * t];
    let mut pre = vec![0.0; g4 * b];
    for step in 0..t {
        let tt = time_at(step, t, reverse);
        for r in 0..g4 {
            for bi in 0..b {
                pre[r * b + bi] = acts[(bi * g4 + r) * t + tt] + bias[r];
            }
        }
        if step > 0 {
            let tp = time_at(step - 1, t, reverse);
            gemm_acc(
                1.0,
                w_hh,
                View::rm(0, g4, h),
                &out,
                View {
                    offset: tp,
                    rows: h,
                    cols: b,
                    rs: t,
                    cs: h * t,
                },
                &mut pre,
                View::rm(0, g4, b),
            );
        }
        for bi in 0..b {
            for j in 0..h {
                let ig = sigmoid(pre[j * b + bi]);
                let fg = sigmoid(pre[(h + j) * b + bi]);
                let gg = pre[(2 * h + j) * b + bi].tanh();
                let og = sigmoid(pre[(3 * h + j) * b + bi]);
                let c_prev = if step > 0 {
                    cells[(bi * h + j) * t + time_at(step - 1, t, reverse)]
                } else {
                    0.0
                };
                let c = fg * c_prev + ig * gg;
                let a = (bi * g4) * t + tt;
                acts[a + j * t] = ig;
                acts[a + (h + j) * t] = fg;
                acts[a + (2 * h + j) * t] = gg;
                acts[a + (3 * h + j) * t] = og;
                cells[(bi * h + j) * t + tt] = c;
                out[(bi * h + j) * t + tt] = og * c.tanh();
            }
        }
    }
    (out, LstmCache { acts, cells })
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn backward(
    dy: &[f64],
    x: &[f64],
    w_ih: &[f64],
    w_hh: &[f64],
    out: &[f64],
    cache: &LstmCache,
    (b, i, t, h): (usize, usize, usize, usize),
    reverse: bool,
    want_dx: bool,
) -> LstmGrads {
    let g4 = 4 * h;
    let LstmCache { acts, cells } = cache;
    let mut da = vec![0.0; b * g4 * t];
    let mut dh_rec = vec![0.0; h * b];
    let mut dc_next = vec![0.0; h * b];
    for step in (0..t).rev() {
        let tt = time_at(step, t, reverse);
        let tp = (step > 0).then(|| time_at(step - 1, t, reverse));
        for bi in 0..b {
            for j in 0..h {
                let a = (bi * g4) * t + tt;
                let ig = acts[a + j * t];
                let fg = acts[a + (h + j) * t];
                let gg = acts[a + (2 * h + j) * t];
                let og = acts[a + (3 * h + j) * t];
                let c = cells[(bi * h + j) * t + tt];
                let c_prev = tp.map_or(0.0, |p| cells[(bi * h + j) * t + p]);
                let tc = c.tanh();
                let dh = dy[(bi * h + j) * t + tt] + dh_rec[j * b + bi];
                let d_o = dh * tc;
                let dc = dc_next[j * b + bi] + dh * og * (1.0 - tc * tc);
                dc_next[j * b + bi] = dc * fg;
                da[a + j * t] = dc * gg * ig * (1.0 - ig);
                da[a + (h + j) * t] = dc * c_prev * fg * (1.0 - fg);
                da[a + (2 * h + j) * t] = dc * ig * (1.0 - gg * gg);
                da[a + (3 * h + j) * t] = d_o * og * (1.0 - og);
            }
        }
        dh_rec.iter_mut().for_each(|v| *v = 0.0);
        if tp.is_some() {
            gemm_acc(
                1.0,
                w_hh,
                View::rm(0, g4, h).t(),
                &da,
                View {
                    offset: tt,
                    rows: g4,
                    cols: b,
                    rs: t,
                    cs: g4 * t,
                },
                &mut dh_rec,
                View::rm(0, h, b),
            );
        }
    }

    // previous hidden state aligned with each frame
    let mut h_prev = vec![0.0; b * h * t];
    for step in 1..t {
        let tt = time_at(step, t, reverse);
        let tp = time_at(step - 1, t, reverse);
        for bi in 0..b {
            for j in 0..h {
                h_prev[(bi * h + j) * t + tt] = out[(bi * h + j) * t + tp];
            }
        }
    }

    let mut dw_ih = vec![0.0; g4 * i];
    let mut dw_hh = vec![0.0; g4 * h];
    let mut dbias = vec![0.0; g4];
    let mut dx = want_dx.then(|| vec![0.0; b * i * t]);
    for bi in 0..b {
        let dab = View::rm(bi * g4 * t, g4, t);
        gemm_acc(1.0, &da, dab, x, View::rm(bi * i * t, i, t).t(), &mut dw_ih, View::rm(0, g4, i));
        gemm_acc(1.0, &da, dab, &h_prev, View::rm(bi * h * t, h, t).t(), &mut dw_hh, View::rm(0, g4, h));
        if let Some(dx) = dx.as_mut() {
            gemm_acc(1.0, w_ih, View::rm(0, g4, i).t(), &da, dab, dx, View::rm(bi * i * t, i, t));
        }
        for r in 0..g4 {
            dbias[r] += da[(bi * g4 + r) * t..(bi * g4 + r + 1) * t].iter().sum::<f64>();
        }
    }
    LstmGrads {
        dx,
        dw_ih,
        dw_hh,
        dbias,
    }
}

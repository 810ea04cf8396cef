//! Central finite-difference verification of reverse-mode gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AffineOrder, Graph, Op, Var};
use crate::error::Result;
use crate::tensor::{ParamStore, Tensor};

/// Step used for central differences.
pub const FD_STEP: f64 = 1e-5;

/// Gradient entries smaller than this are compared on an absolute scale.
pub const REL_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub name: String,
    pub max_rel_error: f64,
    /// Parameter path and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    /// Entries skipped because the perturbation crossed a ReLU kink.
    pub skipped_kinks: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error <= tol && self.checked > 0
    }
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

impl Graph {
    /// Sign pattern of every ReLU input on the tape.
    fn kink_signature(&self) -> Vec<bool> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(x) => Some(x),
                _ => None,
            })
            .flat_map(|x| self.value(x).iter().map(|v| *v > 0.0))
            .collect()
    }
}

/// Reduces `out` to a scalar with fixed random weights so that every output
/// entry contributes to the checked gradient.
fn scalarize(g: &mut Graph, out: Var, seed: u64) -> Result<Var> {
    if g.value(out).len() == 1 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let weights: Vec<f64> = (0..g.value(out).len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let shape = g.shape(out).to_vec();
    let w = g.constant(&shape, weights)?;
    let p = g.mul(out, w)?;
    Ok(g.sum(p))
}

fn evaluate<F>(store: &mut ParamStore, seed: u64, f: &mut F) -> Result<(f64, Vec<bool>)>
where
    F: FnMut(&mut Graph, &mut ParamStore) -> Result<Var>,
{
    let mut g = Graph::train(seed);
    let out = f(&mut g, store)?;
    let loss = scalarize(&mut g, out, seed)?;
    Ok((g.scalar(loss), g.kink_signature()))
}

/// Checks gradients of every trainable tensor in `store` for the scalar built
/// by `f` (non-scalar outputs are reduced with fixed random weights).
pub fn check_store<F>(name: &str, store: &mut ParamStore, seed: u64, mut f: F) -> Result<GradCheckReport>
where
    F: FnMut(&mut Graph, &mut ParamStore) -> Result<Var>,
{
    store.zero_grads();
    let mut g = Graph::train(seed);
    let out = f(&mut g, store)?;
    let loss = scalarize(&mut g, out, seed)?;
    g.backward(loss)?;
    g.accumulate_param_grads(store)?;

    let mut report = GradCheckReport {
        name: name.to_string(),
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        skipped_kinks: 0,
    };
    let ids: Vec<_> = store.ids().filter(|&id| store.get(id).requires_grad()).collect();
    for id in ids {
        let analytic = store
            .get(id)
            .grad()
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; store.get(id).numel()]);
        for (k, &a) in analytic.iter().enumerate() {
            let orig = store.get(id).data()[k];
            store.get_mut(id).data_mut()[k] = orig + FD_STEP;
            let (plus, sig_plus) = evaluate(store, seed, &mut f)?;
            store.get_mut(id).data_mut()[k] = orig - FD_STEP;
            let (minus, sig_minus) = evaluate(store, seed, &mut f)?;
            store.get_mut(id).data_mut()[k] = orig;
            if sig_plus != sig_minus {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let err = rel_error(a, numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((store.name(id).to_string(), k));
            }
        }
    }
    store.zero_grads();
    Ok(report)
}

/// Checks gradients with respect to plain input tensors.
pub fn check_inputs<F>(name: &str, inputs: &[Tensor], seed: u64, mut f: F) -> Result<GradCheckReport>
where
    F: FnMut(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut store = ParamStore::new();
    let ids: Vec<_> = inputs
        .iter()
        .enumerate()
        .map(|(i, t)| store.add_param(&format!("input{i}"), t.clone()))
        .collect();
    check_store(name, &mut store, seed, |g, s| {
        let vars: Vec<Var> = ids.iter().map(|&id| g.param(s, id)).collect();
        f(g, &vars)
    })
}

/// Uniform random tensor in `[-1, 1)`.
pub fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// Runs the finite-difference check over every primitive on random
/// `3 x 4 x 7` inputs, including a dilated convolution whose span exceeds the
/// number of frames.
pub fn primitive_suite(seed: u64) -> Result<Vec<GradCheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_tensor(&[3, 4, 7], &mut rng);
    let y = random_tensor(&[3, 4, 7], &mut rng);
    let ch = random_tensor(&[4], &mut rng);
    let ch2 = random_tensor(&[4], &mut rng);
    let scale = Tensor::from_fn(&[4], |i| 0.5 + 0.25 * i as f64);
    let mut reports = Vec::new();

    reports.push(check_inputs(
        "matmul",
        &[random_tensor(&[3, 4], &mut rng), random_tensor(&[4, 7], &mut rng)],
        seed,
        |g, v| g.matmul(v[0], v[1]),
    )?);
    for (k, d) in [(1, 1), (3, 1), (3, 2), (5, 3)] {
        reports.push(check_inputs(
            &format!("conv1d k={k} d={d}"),
            &[x.clone(), random_tensor(&[5, 4, k], &mut rng)],
            seed,
            move |g, v| g.conv1d(v[0], v[1], d),
        )?);
    }
    reports.push(check_inputs("add", &[x.clone(), y.clone()], seed, |g, v| g.add(v[0], v[1]))?);
    reports.push(check_inputs("mul", &[x.clone(), y.clone()], seed, |g, v| g.mul(v[0], v[1]))?);
    reports.push(check_inputs("affine", &[x.clone()], seed, |g, v| Ok(g.affine(v[0], -1.0, 1.0)))?);
    reports.push(check_inputs("sigmoid", &[x.clone()], seed, |g, v| Ok(g.sigmoid(v[0])))?);
    reports.push(check_inputs("tanh", &[x.clone()], seed, |g, v| Ok(g.tanh(v[0])))?);
    reports.push(check_inputs("relu", &[x.clone()], seed, |g, v| Ok(g.relu(v[0])))?);
    reports.push(check_inputs("dropout", &[x.clone()], seed, |g, v| g.dropout(v[0], 0.3))?);
    reports.push(check_inputs(
        "batch_norm train",
        &[x.clone(), ch.clone(), ch2.clone()],
        seed,
        |g, v| g.batch_norm_train(v[0], v[1], v[2]).map(|r| r.0),
    )?);
    let (rm, rv): (Vec<f64>, Vec<f64>) = (0..4).map(|i| (0.1 * i as f64, 0.5 + 0.2 * i as f64)).unzip();
    reports.push(check_inputs(
        "batch_norm eval",
        &[x.clone(), ch.clone(), ch2.clone()],
        seed,
        |g, v| g.batch_norm_eval(v[0], v[1], v[2], &rm, &rv),
    )?);
    for order in [AffineOrder::ShiftThenScale, AffineOrder::ScaleThenShift] {
        reports.push(check_inputs(
            &format!("channel_affine {order:?}"),
            &[x.clone(), ch.clone(), scale.clone()],
            seed,
            move |g, v| g.channel_affine(v[0], v[1], v[2], order),
        )?);
    }
    reports.push(check_inputs(
        "concat_channels",
        &[x.clone(), random_tensor(&[3, 2, 7], &mut rng)],
        seed,
        |g, v| g.concat_channels(&[v[0], v[1]]),
    )?);
    reports.push(check_inputs("slice_channels", &[x.clone()], seed, |g, v| {
        g.slice_channels(v[0], 1, 2)
    })?);
    let ids: Vec<usize> = (0..21).map(|i| (i * 7 + 3) % 5).collect();
    reports.push(check_inputs(
        "embedding",
        &[random_tensor(&[5, 4], &mut rng)],
        seed,
        move |g, v| g.embedding(v[0], &ids, 3),
    )?);
    for reverse in [false, true] {
        let h = 3;
        reports.push(check_inputs(
            &format!("lstm reverse={reverse}"),
            &[
                x.clone(),
                random_tensor(&[4 * h, 4], &mut rng),
                random_tensor(&[4 * h, h], &mut rng),
                random_tensor(&[4 * h], &mut rng),
            ],
            seed,
            move |g, v| g.lstm(v[0], v[1], v[2], v[3], reverse),
        )?);
    }
    reports.push(check_inputs("mse", &[x.clone(), y.clone()], seed, |g, v| g.mse(v[0], v[1]))?);
    reports.push(check_inputs("sum", &[x], seed, |g, v| Ok(g.sum(v[0])))?);
    Ok(reports)
}

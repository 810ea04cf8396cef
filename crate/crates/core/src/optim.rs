//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ParamStore;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let open01 = |v: f64| v > 0.0 && v < 1.0;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if !open01(self.beta1) || !open01(self.beta2) {
            return Err(Error::Config("Adam betas must lie in (0, 1)".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("Adam epsilon must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: OptimizerConfig,
    /// Current learning rate; starts at `config.learning_rate`.
    pub lr: f64,
    /// Number of steps taken.
    pub step: u64,
    /// First and second moments per store entry (empty for buffers).
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: OptimizerConfig, store: &ParamStore) -> Result<Self> {
        config.validate()?;
        let zeros = |t: &crate::Tensor| if t.requires_grad() { vec![0.0; t.numel()] } else { Vec::new() };
        Ok(Adam {
            lr: config.learning_rate,
            config,
            step: 0,
            m: store.iter().map(|(_, t)| zeros(t)).collect(),
            v: store.iter().map(|(_, t)| zeros(t)).collect(),
        })
    }

    /// Applies one update from the accumulated gradients. A non-finite
    /// gradient aborts the step before anything changes.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if self.m.len() != store.len() {
            return Err(Error::Config("optimizer state does not match the parameter store".into()));
        }
        for (name, t) in store.iter() {
            if t.grad().is_some_and(|g| g.iter().any(|v| !v.is_finite())) {
                return Err(Error::NonFinite(format!("gradient of {name}")));
            }
        }
        self.step += 1;
        let OptimizerConfig {
            beta1: b1,
            beta2: b2,
            epsilon: eps,
            ..
        } = self.config;
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let ids: Vec<_> = store.ids().collect();
        for (k, id) in ids.into_iter().enumerate() {
            let t = store.get_mut(id);
            if !t.requires_grad() {
                continue;
            }
            let grad = t.grad().map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.numel()]);
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for ((p, g), (mi, vi)) in t.data_mut().iter_mut().zip(&grad).zip(m.iter_mut().zip(v.iter_mut())) {
                *mi = b1 * *mi + (1.0 - b1) * g;
                *vi = b2 * *vi + (1.0 - b2) * g * g;
                *p -= self.lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

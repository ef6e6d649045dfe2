use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Gradients, Model, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub base_lr: f64,
    pub warmup_steps: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            base_lr: 1e-4,
            warmup_steps: 4000,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
        }
    }
}

/// Adam moments and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub config: AdamConfig,
    pub step: u64,
    pub first: BTreeMap<String, Tensor>,
    pub second: BTreeMap<String, Tensor>,
}

impl OptimState {
    pub fn new(config: AdamConfig) -> Self {
        OptimState {
            config,
            step: 0,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
        }
    }

    /// Inverse square-root schedule with linear warmup:
    /// `base · min(s / warmup, sqrt(warmup / s))`.
    pub fn lr_at(&self, step: u64) -> f64 {
        let c = &self.config;
        if step == 0 {
            return 0.0;
        }
        let s = step as f64;
        let w = c.warmup_steps.max(1) as f64;
        c.base_lr * (s / w).min((w / s).sqrt())
    }
}

/// One Adam update with bias correction on every tensor in `grads`.
pub fn optimizer_step(model: &mut Model, grads: &Gradients, opt: &mut OptimState) -> Result<()> {
    for (name, g) in grads.iter() {
        let p = model.params.get(name).ok_or_else(|| Error::UnknownTensor(name.to_owned()))?;
        if p.shape() != g.shape() {
            return Err(Error::ShapeMismatch {
                name: name.to_owned(),
                expected: p.shape().to_vec(),
                got: g.shape().to_vec(),
            });
        }
        if model.params.is_frozen(name) {
            return Err(Error::UnknownTensor(name.to_owned()));
        }
        for m in [&opt.first, &opt.second] {
            if let Some(t) = m.get(name) {
                if t.shape() != g.shape() {
                    return Err(Error::ShapeMismatch {
                        name: name.to_owned(),
                        expected: t.shape().to_vec(),
                        got: g.shape().to_vec(),
                    });
                }
            }
        }
    }
    opt.step += 1;
    let c = opt.config.clone();
    let lr = opt.lr_at(opt.step);
    let bc1 = 1.0 - c.beta1.powi(opt.step as i32);
    let bc2 = 1.0 - c.beta2.powi(opt.step as i32);
    for (name, g) in grads.iter() {
        let m = opt.first.entry(name.to_owned()).or_insert_with(|| Tensor::zeros(g.raw_dim()));
        let v = opt.second.entry(name.to_owned()).or_insert_with(|| Tensor::zeros(g.raw_dim()));
        let p = model.params.get_mut(name)?;
        ndarray::Zip::from(p).and(m).and(v).and(g).for_each(|p, m, v, &g| {
            *m = c.beta1 * *m + (1.0 - c.beta1) * g;
            *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
            *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + c.eps);
        });
    }
    Ok(())
}

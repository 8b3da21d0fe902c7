use alloc::{format, vec::Vec};

use super::{Gradients, ParamStore};
use crate::{math, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment accumulators, one buffer per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros = || {
            store
                .params()
                .iter()
                .map(|p| alloc::vec![0.0; p.value.len()])
                .collect()
        };
        Self {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of every trainable parameter.
pub fn adam_step(
    store: &mut ParamStore,
    grads: &Gradients,
    state: &mut AdamState,
    lr: f64,
    cfg: AdamConfig,
) -> Result<()> {
    if grads.len() != store.len() || state.m.len() != store.len() || state.v.len() != store.len() {
        return Err(Error::Shape(format!(
            "adam: {} parameters, {} gradients, {} moments",
            store.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for ((p, g), (m, v)) in store
        .params()
        .iter()
        .zip(grads.iter())
        .zip(state.m.iter().zip(&state.v))
    {
        if p.value.len() != g.len() || m.len() != g.len() || v.len() != g.len() {
            return Err(Error::Shape(format!(
                "adam: gradient for {} has {} values",
                p.name,
                g.len()
            )));
        }
    }
    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - math::powf(cfg.beta1, t);
    let c2 = 1.0 - math::powf(cfg.beta2, t);
    for (i, (p, g)) in store.params_mut().iter_mut().zip(grads.iter()).enumerate() {
        if !p.trainable {
            continue;
        }
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        for j in 0..g.len() {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            let mhat = m[j] / c1;
            let vhat = v[j] / c2;
            p.value[j] -= lr * mhat / (math::sqrt(vhat) + cfg.eps);
        }
    }
    Ok(())
}

/// Cosine annealing from `lr_max` at step 0 to `lr_min` at `total_steps`.
pub fn cosine_lr(step: u64, total_steps: u64, lr_max: f64, lr_min: f64) -> Result<f64> {
    if step > total_steps {
        return Err(Error::InvalidArgument(format!(
            "step {step} beyond schedule of {total_steps}"
        )));
    }
    if total_steps == 0 {
        return Ok(lr_max);
    }
    let phase = core::f64::consts::PI * step as f64 / total_steps as f64;
    Ok(lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math::cos(phase)))
}

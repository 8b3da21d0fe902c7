use alloc::{format, vec::Vec};

use super::{Gradients, ParamId, ParamStore, Tensor};
use crate::{math, Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Batch normalization over the last (channel) axis.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    gamma: ParamId,
    beta: ParamId,
    running_mean: ParamId,
    running_var: ParamId,
    /// Single-element buffer counting the batches folded into the running stats.
    tracked: ParamId,
    channels: usize,
}

/// What the backward pass needs from a training-mode forward.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub xhat: Tensor,
    pub inv_std: Vec<f64>,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Self {
        let c = channels;
        Self {
            gamma: store.add(format!("{name}.gamma"), &[c], alloc::vec![1.0; c], true),
            beta: store.add(format!("{name}.beta"), &[c], alloc::vec![0.0; c], true),
            running_mean: store.add(
                format!("{name}.running_mean"),
                &[c],
                alloc::vec![0.0; c],
                false,
            ),
            running_var: store.add(
                format!("{name}.running_var"),
                &[c],
                alloc::vec![1.0; c],
                false,
            ),
            tracked: store.add(format!("{name}.tracked"), &[1], alloc::vec![0.0], false),
            channels,
        }
    }

    pub fn gamma(&self) -> ParamId {
        self.gamma
    }

    pub fn beta(&self) -> ParamId {
        self.beta
    }

    pub fn tracked(&self) -> ParamId {
        self.tracked
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        if x.shape().last() != Some(&self.channels) {
            return Err(Error::Shape(format!(
                "batch norm over {} channels got shape {:?}",
                self.channels,
                x.shape()
            )));
        }
        Ok(())
    }

    /// Normalizes with batch statistics and folds them into the running
    /// statistics (momentum 0.1, unbiased variance).
    pub fn forward_train(&self, store: &mut ParamStore, x: &Tensor) -> Result<(Tensor, BnCache)> {
        self.check(x)?;
        let c = self.channels;
        let n = x.len() / c;
        let mut mean = alloc::vec![0.0; c];
        for row in x.data().chunks_exact(c) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = alloc::vec![0.0; c];
        for row in x.data().chunks_exact(c) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                let d = v - m;
                *s += d * d;
            }
        }
        var.iter_mut().for_each(|s| *s /= n as f64);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / math::sqrt(v + BN_EPS)).collect();

        let gamma = store.get(self.gamma);
        let beta = store.get(self.beta);
        let mut xhat = alloc::vec![0.0; x.len()];
        let mut y = alloc::vec![0.0; x.len()];
        for ((row, hrow), yrow) in x
            .data()
            .chunks_exact(c)
            .zip(xhat.chunks_exact_mut(c))
            .zip(y.chunks_exact_mut(c))
        {
            for ch in 0..c {
                let h = (row[ch] - mean[ch]) * inv_std[ch];
                hrow[ch] = h;
                yrow[ch] = gamma[ch] * h + beta[ch];
            }
        }

        let unbias = if n > 1 {
            n as f64 / (n - 1) as f64
        } else {
            1.0
        };
        for (r, m) in store.get_mut(self.running_mean).iter_mut().zip(&mean) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * m;
        }
        for (r, v) in store.get_mut(self.running_var).iter_mut().zip(&var) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v * unbias;
        }
        store.get_mut(self.tracked)[0] += 1.0;

        let shape = x.shape().to_vec();
        Ok((
            Tensor::from_parts(shape.clone(), y),
            BnCache {
                xhat: Tensor::from_parts(shape, xhat),
                inv_std,
            },
        ))
    }

    /// Normalizes with the running statistics.
    pub fn forward_eval(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        if store.get(self.tracked)[0] <= 0.0 {
            return Err(Error::MissingStatistics);
        }
        let c = self.channels;
        let gamma = store.get(self.gamma);
        let beta = store.get(self.beta);
        let mean = store.get(self.running_mean);
        let scale: Vec<f64> = store
            .get(self.running_var)
            .iter()
            .zip(gamma)
            .map(|(v, g)| g / math::sqrt(v + BN_EPS))
            .collect();
        let mut y = x.data().to_vec();
        for row in y.chunks_exact_mut(c) {
            for ch in 0..c {
                row[ch] = (row[ch] - mean[ch]) * scale[ch] + beta[ch];
            }
        }
        Ok(Tensor::from_parts(x.shape().to_vec(), y))
    }

    /// Gradient of a training-mode forward.
    pub fn backward(
        &self,
        store: &ParamStore,
        cache: &BnCache,
        dy: &Tensor,
        grads: &mut Gradients,
    ) -> Result<Tensor> {
        if dy.shape() != cache.xhat.shape() {
            return Err(Error::Shape(format!(
                "batch norm upstream gradient has shape {:?}",
                dy.shape()
            )));
        }
        let c = self.channels;
        let n = (dy.len() / c) as f64;
        let mut dgamma = alloc::vec![0.0; c];
        let mut dbeta = alloc::vec![0.0; c];
        for (d, h) in dy
            .data()
            .chunks_exact(c)
            .zip(cache.xhat.data().chunks_exact(c))
        {
            for ch in 0..c {
                dgamma[ch] += d[ch] * h[ch];
                dbeta[ch] += d[ch];
            }
        }
        let gamma = store.get(self.gamma);
        let mut dx = alloc::vec![0.0; dy.len()];
        for ((out, d), h) in dx
            .chunks_exact_mut(c)
            .zip(dy.data().chunks_exact(c))
            .zip(cache.xhat.data().chunks_exact(c))
        {
            for ch in 0..c {
                let k = gamma[ch] * cache.inv_std[ch] / n;
                out[ch] = k * (n * d[ch] - dbeta[ch] - h[ch] * dgamma[ch]);
            }
        }
        for (g, v) in grads.get_mut(self.gamma).iter_mut().zip(&dgamma) {
            *g += v;
        }
        for (g, v) in grads.get_mut(self.beta).iter_mut().zip(&dbeta) {
            *g += v;
        }
        Ok(Tensor::from_parts(dy.shape().to_vec(), dx))
    }
}

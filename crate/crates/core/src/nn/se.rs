use alloc::{format, vec::Vec};
use rand::Rng;

use super::{Gradients, ParamId, ParamStore, Tensor};
use crate::{math, Error, Result};

/// Squeeze-and-excitation channel gating without biases.
///
/// `squeeze = mean_{t,f} x`, `gate = sigmoid(W2 relu(W1 squeeze))`, and the
/// output is `x` scaled per channel by `gate`. `W1` is `[hidden, C]`, `W2`
/// is `[C, hidden]` with `hidden = C / reduction`.
#[derive(Debug, Clone)]
pub struct SqueezeExcitation {
    w1: ParamId,
    w2: ParamId,
    channels: usize,
    hidden: usize,
}

#[derive(Debug, Clone)]
pub struct SeCache {
    pub squeeze: Vec<f64>,
    pub hidden_pre: Vec<f64>,
    pub gate: Vec<f64>,
}

impl SqueezeExcitation {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        channels: usize,
        reduction: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let hidden = if reduction == 0 {
            0
        } else {
            channels / reduction
        };
        if hidden < 1 {
            return Err(Error::Config(format!(
                "squeeze-excitation on {channels} channels with reduction {reduction} has no hidden units"
            )));
        }
        let w1 = super::xavier_uniform(rng, hidden * channels, channels, hidden);
        let w2 = super::xavier_uniform(rng, channels * hidden, hidden, channels);
        Ok(Self {
            w1: store.add(format!("{name}.w1"), &[hidden, channels], w1, true),
            w2: store.add(format!("{name}.w2"), &[channels, hidden], w2, true),
            channels,
            hidden,
        })
    }

    pub fn w1(&self) -> ParamId {
        self.w1
    }

    pub fn w2(&self) -> ParamId {
        self.w2
    }

    fn dims(&self, x: &Tensor) -> Result<(usize, usize)> {
        x.expect_rank(4, "squeeze-excitation")?;
        let s = x.shape();
        if s[3] != self.channels {
            return Err(Error::Shape(format!(
                "squeeze-excitation expects {} channels, got {:?}",
                self.channels, s
            )));
        }
        Ok((s[0], s[1] * s[2]))
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<(Tensor, SeCache)> {
        let (batch, area) = self.dims(x)?;
        let (c, h) = (self.channels, self.hidden);
        let w1 = store.get(self.w1);
        let w2 = store.get(self.w2);
        let mut squeeze = alloc::vec![0.0; batch * c];
        let mut hidden_pre = alloc::vec![0.0; batch * h];
        let mut gate = alloc::vec![0.0; batch * c];
        let mut y = x.data().to_vec();
        for b in 0..batch {
            let s = &mut squeeze[b * c..(b + 1) * c];
            for px in x.data()[b * area * c..(b + 1) * area * c].chunks_exact(c) {
                for (acc, v) in s.iter_mut().zip(px) {
                    *acc += v;
                }
            }
            s.iter_mut().for_each(|v| *v /= area as f64);
            let u = &mut hidden_pre[b * h..(b + 1) * h];
            for (j, uj) in u.iter_mut().enumerate() {
                *uj = w1[j * c..(j + 1) * c]
                    .iter()
                    .zip(s.iter())
                    .map(|(w, v)| w * v)
                    .sum();
            }
            let e = &mut gate[b * c..(b + 1) * c];
            for (i, ei) in e.iter_mut().enumerate() {
                let v: f64 = w2[i * h..(i + 1) * h]
                    .iter()
                    .zip(u.iter())
                    .map(|(w, a)| w * a.max(0.0))
                    .sum();
                *ei = math::sigmoid(v);
            }
            for px in y[b * area * c..(b + 1) * area * c].chunks_exact_mut(c) {
                for (v, g) in px.iter_mut().zip(e.iter()) {
                    *v *= g;
                }
            }
        }
        Ok((
            Tensor::from_parts(x.shape().to_vec(), y),
            SeCache {
                squeeze,
                hidden_pre,
                gate,
            },
        ))
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        x: &Tensor,
        cache: &SeCache,
        dy: &Tensor,
        grads: &mut Gradients,
    ) -> Result<Tensor> {
        let (batch, area) = self.dims(x)?;
        if dy.shape() != x.shape() {
            return Err(Error::Shape(format!(
                "squeeze-excitation upstream gradient has shape {:?}",
                dy.shape()
            )));
        }
        let (c, h) = (self.channels, self.hidden);
        let w1 = store.get(self.w1);
        let w2 = store.get(self.w2);
        let mut dw1 = core::mem::take(&mut grads.grads_mut()[self.w1.0]);
        let mut dw2 = core::mem::take(&mut grads.grads_mut()[self.w2.0]);
        let mut dx = alloc::vec![0.0; x.len()];
        let mut dgate = alloc::vec![0.0; c];
        let mut da = alloc::vec![0.0; h];
        let mut ds = alloc::vec![0.0; c];
        for b in 0..batch {
            let range = b * area * c..(b + 1) * area * c;
            let e = &cache.gate[b * c..(b + 1) * c];
            let s = &cache.squeeze[b * c..(b + 1) * c];
            let u = &cache.hidden_pre[b * h..(b + 1) * h];
            dgate.iter_mut().for_each(|v| *v = 0.0);
            for (xp, dp) in x.data()[range.clone()]
                .chunks_exact(c)
                .zip(dy.data()[range.clone()].chunks_exact(c))
            {
                for ch in 0..c {
                    dgate[ch] += xp[ch] * dp[ch];
                }
            }
            // through the sigmoid
            for (d, g) in dgate.iter_mut().zip(e) {
                *d *= g * (1.0 - g);
            }
            da.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..c {
                for j in 0..h {
                    dw2[i * h + j] += dgate[i] * u[j].max(0.0);
                    da[j] += w2[i * h + j] * dgate[i];
                }
            }
            for (d, uj) in da.iter_mut().zip(u) {
                if *uj <= 0.0 {
                    *d = 0.0;
                }
            }
            ds.iter_mut().for_each(|v| *v = 0.0);
            for j in 0..h {
                for i in 0..c {
                    dw1[j * c + i] += da[j] * s[i];
                    ds[i] += w1[j * c + i] * da[j];
                }
            }
            let spread: Vec<f64> = ds.iter().map(|v| v / area as f64).collect();
            for (out, dp) in dx[range.clone()]
                .chunks_exact_mut(c)
                .zip(dy.data()[range].chunks_exact(c))
            {
                for ch in 0..c {
                    out[ch] = dp[ch] * e[ch] + spread[ch];
                }
            }
        }
        grads.grads_mut()[self.w1.0] = dw1;
        grads.grads_mut()[self.w2.0] = dw2;
        Ok(Tensor::from_parts(x.shape().to_vec(), dx))
    }
}

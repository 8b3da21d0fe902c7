use alloc::format;
use rand::Rng;

use super::gemm::{gemm_nn, gemm_nt, gemm_tn};
use super::{Gradients, ParamId, ParamStore, Tensor};
use crate::{Error, Result};

const K: usize = 3;

/// 3x3 convolution, stride 1, zero "same" padding, channels last.
///
/// Weights are stored `[3, 3, c_in, c_out]`. The implementation runs one
/// GEMM per kernel tap over the flattened zero-padded image: output row
/// `t * (F + 2) + f` reads input row `t * (F + 2) + f + dt * (F + 2) + df`,
/// so every tap is a contiguous `rows x c_in` slab. Rows that land on the
/// right-hand padding columns are computed and discarded.
#[derive(Debug, Clone)]
pub struct Conv2d {
    weight: ParamId,
    bias: ParamId,
    cin: usize,
    cout: usize,
}

struct Geometry {
    t: usize,
    f: usize,
    width: usize,
    rows: usize,
}

impl Geometry {
    fn new(t: usize, f: usize) -> Self {
        let width = f + 2;
        Self {
            t,
            f,
            width,
            rows: (t - 1) * width + f,
        }
    }

    fn padded_len(&self, c: usize) -> usize {
        (self.t + 2) * self.width * c
    }
}

impl Conv2d {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        rng: &mut R,
    ) -> Self {
        let w = super::xavier_uniform(rng, K * K * cin * cout, K * K * cin, K * K * cout);
        let weight = store.add(format!("{name}.weight"), &[K, K, cin, cout], w, true);
        let bias = store.add(
            format!("{name}.bias"),
            &[cout],
            alloc::vec![0.0; cout],
            true,
        );
        Self {
            weight,
            bias,
            cin,
            cout,
        }
    }

    pub fn weight(&self) -> ParamId {
        self.weight
    }

    pub fn bias(&self) -> ParamId {
        self.bias
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, Geometry)> {
        x.expect_rank(4, "conv2d")?;
        let s = x.shape();
        if s[3] != self.cin {
            return Err(Error::Shape(format!(
                "conv2d expects {} input channels, got {}",
                self.cin, s[3]
            )));
        }
        Ok((s[0], Geometry::new(s[1], s[2])))
    }

    fn pad_into(&self, g: &Geometry, sample: &[f64], padded: &mut [f64]) {
        padded.iter_mut().for_each(|v| *v = 0.0);
        let row = g.f * self.cin;
        for t in 0..g.t {
            let dst = ((t + 1) * g.width + 1) * self.cin;
            padded[dst..dst + row].copy_from_slice(&sample[t * row..(t + 1) * row]);
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let (batch, g) = self.check_input(x)?;
        let (cin, cout) = (self.cin, self.cout);
        let w = store.get(self.weight);
        let bias = store.get(self.bias);
        let in_len = g.t * g.f * cin;
        let out_len = g.t * g.f * cout;
        let mut y = alloc::vec![0.0; batch * out_len];
        let mut padded = alloc::vec![0.0; g.padded_len(cin)];
        let mut flat = alloc::vec![0.0; g.rows * cout];
        for b in 0..batch {
            self.pad_into(&g, &x.data()[b * in_len..(b + 1) * in_len], &mut padded);
            for tap in 0..K * K {
                let off = (tap / K) * g.width + tap % K;
                let a = &padded[off * cin..(off + g.rows) * cin];
                let beta = if tap == 0 { 0.0 } else { 1.0 };
                gemm_nn(
                    g.rows,
                    cin,
                    cout,
                    a,
                    &w[tap * cin * cout..(tap + 1) * cin * cout],
                    beta,
                    &mut flat,
                );
            }
            let out = &mut y[b * out_len..(b + 1) * out_len];
            for t in 0..g.t {
                for f in 0..g.f {
                    let src = &flat[(t * g.width + f) * cout..][..cout];
                    let dst = &mut out[(t * g.f + f) * cout..][..cout];
                    for ((d, s), bb) in dst.iter_mut().zip(src).zip(bias) {
                        *d = s + bb;
                    }
                }
            }
        }
        Ok(Tensor::from_parts(alloc::vec![batch, g.t, g.f, cout], y))
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    pub fn backward(
        &self,
        store: &ParamStore,
        x: &Tensor,
        dy: &Tensor,
        grads: &mut Gradients,
    ) -> Result<Tensor> {
        let (batch, g) = self.check_input(x)?;
        let (cin, cout) = (self.cin, self.cout);
        if dy.shape() != [batch, g.t, g.f, cout] {
            return Err(Error::Shape(format!(
                "conv2d upstream gradient has shape {:?}",
                dy.shape()
            )));
        }
        let w = store.get(self.weight);
        let in_len = g.t * g.f * cin;
        let out_len = g.t * g.f * cout;
        let mut dx = alloc::vec![0.0; batch * in_len];
        let mut padded = alloc::vec![0.0; g.padded_len(cin)];
        let mut dpadded = alloc::vec![0.0; g.padded_len(cin)];
        let mut dflat = alloc::vec![0.0; g.rows * cout];
        let mut dw = core::mem::take(&mut grads.grads_mut()[self.weight.0]);
        let mut db = core::mem::take(&mut grads.grads_mut()[self.bias.0]);
        for b in 0..batch {
            self.pad_into(&g, &x.data()[b * in_len..(b + 1) * in_len], &mut padded);
            let up = &dy.data()[b * out_len..(b + 1) * out_len];
            dflat.iter_mut().for_each(|v| *v = 0.0);
            for t in 0..g.t {
                for f in 0..g.f {
                    let src = &up[(t * g.f + f) * cout..][..cout];
                    dflat[(t * g.width + f) * cout..][..cout].copy_from_slice(src);
                    for (acc, v) in db.iter_mut().zip(src) {
                        *acc += v;
                    }
                }
            }
            dpadded.iter_mut().for_each(|v| *v = 0.0);
            for tap in 0..K * K {
                let off = (tap / K) * g.width + tap % K;
                let wtap = &w[tap * cin * cout..(tap + 1) * cin * cout];
                gemm_tn(
                    cin,
                    g.rows,
                    cout,
                    &padded[off * cin..(off + g.rows) * cin],
                    &dflat,
                    1.0,
                    &mut dw[tap * cin * cout..(tap + 1) * cin * cout],
                );
                gemm_nt(
                    g.rows,
                    cout,
                    cin,
                    &dflat,
                    wtap,
                    1.0,
                    &mut dpadded[off * cin..(off + g.rows) * cin],
                );
            }
            let row = g.f * cin;
            let dst = &mut dx[b * in_len..(b + 1) * in_len];
            for t in 0..g.t {
                let src = ((t + 1) * g.width + 1) * cin;
                dst[t * row..(t + 1) * row].copy_from_slice(&dpadded[src..src + row]);
            }
        }
        grads.grads_mut()[self.weight.0] = dw;
        grads.grads_mut()[self.bias.0] = db;
        Ok(Tensor::from_parts(x.shape().to_vec(), dx))
    }
}

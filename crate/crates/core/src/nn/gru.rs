use alloc::{format, vec::Vec};
use rand::Rng;

use super::gemm::{gemm_nn, gemm_nt, gemm_tn};
use super::{Gradients, ParamId, ParamStore, Tensor};
use crate::{math, Error, Result};

/// One direction of a GRU layer.
///
/// Gate blocks are ordered `[reset, update, candidate]` in the `3H` rows of
/// `w_ih: [3H, D]` and `w_hh: [3H, H]`:
///
/// ```text
/// r  = sigmoid(W_ir x + b_ir + W_hr h + b_hr)
/// z  = sigmoid(W_iz x + b_iz + W_hz h + b_hz)
/// n  = tanh(W_in x + b_in + r * (W_hn h + b_hn))
/// h' = (1 - z) * n + z * h
/// ```
#[derive(Debug, Clone)]
pub struct GruDirection {
    w_ih: ParamId,
    w_hh: ParamId,
    b_ih: ParamId,
    b_hh: ParamId,
    input: usize,
    hidden: usize,
    reverse: bool,
}

/// Per-step activations of one direction, laid out `[step][batch][hidden]`.
#[derive(Debug, Clone)]
pub struct DirectionCache {
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    hn: Vec<f64>,
    /// `steps + 1` hidden states, the first being the zero initial state.
    h: Vec<f64>,
}

impl GruDirection {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        reverse: bool,
        rng: &mut R,
    ) -> Self {
        let g = 3 * hidden;
        let w_ih = super::xavier_uniform(rng, g * input, input, g);
        let w_hh = super::xavier_uniform(rng, g * hidden, hidden, g);
        Self {
            w_ih: store.add(format!("{name}.w_ih"), &[g, input], w_ih, true),
            w_hh: store.add(format!("{name}.w_hh"), &[g, hidden], w_hh, true),
            b_ih: store.add(format!("{name}.b_ih"), &[g], alloc::vec![0.0; g], true),
            b_hh: store.add(format!("{name}.b_hh"), &[g], alloc::vec![0.0; g], true),
            input,
            hidden,
            reverse,
        }
    }

    pub fn params(&self) -> [ParamId; 4] {
        [self.w_ih, self.w_hh, self.b_ih, self.b_hh]
    }

    fn time_index(&self, step: usize, steps: usize) -> usize {
        if self.reverse {
            steps - 1 - step
        } else {
            step
        }
    }

    /// Runs over `x: [B, T, D]`; returns `[B, T, H]` values (flat) and the cache.
    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<(Vec<f64>, DirectionCache)> {
        let (batch, steps) = check_input(x, self.input)?;
        let (h, g) = (self.hidden, 3 * self.hidden);
        let mut gx = alloc::vec![0.0; batch * steps * g];
        gemm_nt(
            batch * steps,
            self.input,
            g,
            x.data(),
            store.get(self.w_ih),
            0.0,
            &mut gx,
        );
        let b_ih = store.get(self.b_ih);
        for row in gx.chunks_exact_mut(g) {
            for (v, b) in row.iter_mut().zip(b_ih) {
                *v += b;
            }
        }
        let w_hh = store.get(self.w_hh);
        let b_hh = store.get(self.b_hh);
        let layer = batch * h;
        let mut cache = DirectionCache {
            r: alloc::vec![0.0; steps * layer],
            z: alloc::vec![0.0; steps * layer],
            n: alloc::vec![0.0; steps * layer],
            hn: alloc::vec![0.0; steps * layer],
            h: alloc::vec![0.0; (steps + 1) * layer],
        };
        let mut y = alloc::vec![0.0; batch * steps * h];
        let mut gh = alloc::vec![0.0; batch * g];
        for s in 0..steps {
            let tt = self.time_index(s, steps);
            let (prev_states, next_states) = cache.h.split_at_mut((s + 1) * layer);
            let hprev = &prev_states[s * layer..];
            gemm_nt(batch, h, g, hprev, w_hh, 0.0, &mut gh);
            for b in 0..batch {
                let gxr = &gx[(b * steps + tt) * g..][..g];
                let ghr = &gh[b * g..(b + 1) * g];
                for j in 0..h {
                    let idx = s * layer + b * h + j;
                    let r = math::sigmoid(gxr[j] + ghr[j] + b_hh[j]);
                    let z = math::sigmoid(gxr[h + j] + ghr[h + j] + b_hh[h + j]);
                    let hn = ghr[2 * h + j] + b_hh[2 * h + j];
                    let n = math::tanh(gxr[2 * h + j] + r * hn);
                    let hp = hprev[b * h + j];
                    let hv = (1.0 - z) * n + z * hp;
                    cache.r[idx] = r;
                    cache.z[idx] = z;
                    cache.n[idx] = n;
                    cache.hn[idx] = hn;
                    next_states[b * h + j] = hv;
                    y[(b * steps + tt) * h + j] = hv;
                }
            }
        }
        Ok((y, cache))
    }

    /// Backpropagation through time. `dy` is `[B, T, H]` (flat).
    pub fn backward(
        &self,
        store: &ParamStore,
        x: &Tensor,
        cache: &DirectionCache,
        dy: &[f64],
        grads: &mut Gradients,
    ) -> Result<Vec<f64>> {
        let (batch, steps) = check_input(x, self.input)?;
        let (h, g) = (self.hidden, 3 * self.hidden);
        if dy.len() != batch * steps * h {
            return Err(Error::Shape(format!(
                "gru upstream gradient has {} values",
                dy.len()
            )));
        }
        let layer = batch * h;
        let w_hh = store.get(self.w_hh);
        let mut dgx = alloc::vec![0.0; batch * steps * g];
        let mut dgh = alloc::vec![0.0; batch * g];
        let mut dh = alloc::vec![0.0; layer];
        let mut dh_prev = alloc::vec![0.0; layer];
        let mut dw_hh = core::mem::take(&mut grads.grads_mut()[self.w_hh.0]);
        let mut db_hh = core::mem::take(&mut grads.grads_mut()[self.b_hh.0]);
        for s in (0..steps).rev() {
            let tt = self.time_index(s, steps);
            let hprev = &cache.h[s * layer..(s + 1) * layer];
            for b in 0..batch {
                for j in 0..h {
                    let idx = s * layer + b * h + j;
                    let (r, z, n, hn) = (cache.r[idx], cache.z[idx], cache.n[idx], cache.hn[idx]);
                    let dht = dh[b * h + j] + dy[(b * steps + tt) * h + j];
                    let dn = dht * (1.0 - z);
                    let dz = dht * (hprev[b * h + j] - n);
                    let dan = dn * (1.0 - n * n);
                    let dar = dan * hn * r * (1.0 - r);
                    let daz = dz * z * (1.0 - z);
                    let row = (b * steps + tt) * g;
                    dgx[row + j] = dar;
                    dgx[row + h + j] = daz;
                    dgx[row + 2 * h + j] = dan;
                    dgh[b * g + j] = dar;
                    dgh[b * g + h + j] = daz;
                    dgh[b * g + 2 * h + j] = dan * r;
                    dh_prev[b * h + j] = dht * z;
                }
            }
            gemm_tn(g, batch, h, &dgh, hprev, 1.0, &mut dw_hh);
            for row in dgh.chunks_exact(g) {
                for (acc, v) in db_hh.iter_mut().zip(row) {
                    *acc += v;
                }
            }
            gemm_nn(batch, g, h, &dgh, w_hh, 1.0, &mut dh_prev);
            core::mem::swap(&mut dh, &mut dh_prev);
        }
        grads.grads_mut()[self.w_hh.0] = dw_hh;
        grads.grads_mut()[self.b_hh.0] = db_hh;

        gemm_tn(
            g,
            batch * steps,
            self.input,
            &dgx,
            x.data(),
            1.0,
            grads.get_mut(self.w_ih),
        );
        let db_ih = grads.get_mut(self.b_ih);
        for row in dgx.chunks_exact(g) {
            for (acc, v) in db_ih.iter_mut().zip(row) {
                *acc += v;
            }
        }
        let mut dx = alloc::vec![0.0; batch * steps * self.input];
        gemm_nn(
            batch * steps,
            g,
            self.input,
            &dgx,
            store.get(self.w_ih),
            0.0,
            &mut dx,
        );
        Ok(dx)
    }
}

fn check_input(x: &Tensor, input: usize) -> Result<(usize, usize)> {
    x.expect_rank(3, "gru")?;
    let s = x.shape();
    if s[2] != input {
        return Err(Error::Shape(format!(
            "gru expects {input} features, got {s:?}"
        )));
    }
    if s[1] == 0 {
        return Err(Error::Empty("gru sequence"));
    }
    Ok((s[0], s[1]))
}

/// Bidirectional GRU: forward and time-reversed outputs concatenated per frame.
#[derive(Debug, Clone)]
pub struct BiGru {
    fwd: GruDirection,
    bwd: GruDirection,
    hidden: usize,
}

#[derive(Debug, Clone)]
pub struct BiGruCache {
    fwd: DirectionCache,
    bwd: DirectionCache,
}

impl BiGru {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let fwd = GruDirection::new(store, &format!("{name}.fwd"), input, hidden, false, rng);
        let bwd = GruDirection::new(store, &format!("{name}.bwd"), input, hidden, true, rng);
        Self { fwd, bwd, hidden }
    }

    pub fn directions(&self) -> [&GruDirection; 2] {
        [&self.fwd, &self.bwd]
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden
    }

    /// `[B, T, D] -> [B, T, 2H]`.
    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<(Tensor, BiGruCache)> {
        let (yf, cf) = self.fwd.forward(store, x)?;
        let (yb, cb) = self.bwd.forward(store, x)?;
        let h = self.hidden;
        let mut y = Vec::with_capacity(2 * yf.len());
        for (a, b) in yf.chunks_exact(h).zip(yb.chunks_exact(h)) {
            y.extend_from_slice(a);
            y.extend_from_slice(b);
        }
        let shape = alloc::vec![x.shape()[0], x.shape()[1], 2 * h];
        Ok((
            Tensor::from_parts(shape, y),
            BiGruCache { fwd: cf, bwd: cb },
        ))
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        x: &Tensor,
        cache: &BiGruCache,
        dy: &Tensor,
        grads: &mut Gradients,
    ) -> Result<Tensor> {
        let h = self.hidden;
        if dy.shape() != [x.shape()[0], x.shape()[1], 2 * h] {
            return Err(Error::Shape(format!(
                "bi-gru upstream gradient has shape {:?}",
                dy.shape()
            )));
        }
        let mut df = Vec::with_capacity(dy.len() / 2);
        let mut db = Vec::with_capacity(dy.len() / 2);
        for row in dy.data().chunks_exact(2 * h) {
            df.extend_from_slice(&row[..h]);
            db.extend_from_slice(&row[h..]);
        }
        let mut dx = self.fwd.backward(store, x, &cache.fwd, &df, grads)?;
        let dxb = self.bwd.backward(store, x, &cache.bwd, &db, grads)?;
        for (a, b) in dx.iter_mut().zip(dxb) {
            *a += b;
        }
        Ok(Tensor::from_parts(x.shape().to_vec(), dx))
    }
}

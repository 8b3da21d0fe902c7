use alloc::{format, vec::Vec};

use super::Tensor;
use crate::{Error, Result};

/// Non-overlapping average pooling over `(time, freq)` of a `[B, T, F, C]` tensor.
pub fn avg_pool2d(x: &Tensor, pool: (usize, usize)) -> Result<Tensor> {
    x.expect_rank(4, "avg_pool2d")?;
    let (b, t, f, c) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (pt, pf) = pool;
    if pt == 0 || pf == 0 || t % pt != 0 || f % pf != 0 {
        return Err(Error::Shape(format!(
            "pool {pool:?} does not divide ({t}, {f})"
        )));
    }
    let (to, fo) = (t / pt, f / pf);
    let scale = 1.0 / (pt * pf) as f64;
    let mut y = alloc::vec![0.0; b * to * fo * c];
    for bi in 0..b {
        for ti in 0..t {
            for fi in 0..f {
                let src = &x.data()[((bi * t + ti) * f + fi) * c..][..c];
                let dst = &mut y[((bi * to + ti / pt) * fo + fi / pf) * c..][..c];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += s * scale;
                }
            }
        }
    }
    Ok(Tensor::from_parts(alloc::vec![b, to, fo, c], y))
}

pub fn avg_pool2d_backward(input_shape: &[usize], dy: &Tensor, pool: (usize, usize)) -> Tensor {
    let (b, t, f, c) = (
        input_shape[0],
        input_shape[1],
        input_shape[2],
        input_shape[3],
    );
    let (pt, pf) = pool;
    let (to, fo) = (t / pt, f / pf);
    let scale = 1.0 / (pt * pf) as f64;
    let mut dx = alloc::vec![0.0; b * t * f * c];
    for bi in 0..b {
        for ti in 0..t {
            for fi in 0..f {
                let src = &dy.data()[((bi * to + ti / pt) * fo + fi / pf) * c..][..c];
                let dst = &mut dx[((bi * t + ti) * f + fi) * c..][..c];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = s * scale;
                }
            }
        }
    }
    Tensor::from_parts(input_shape.to_vec(), dx)
}

/// Mean over the frequency axis: `[B, T, F, C] -> [B, T, C]`.
pub fn mel_average(x: &Tensor) -> Result<Tensor> {
    x.expect_rank(4, "mel_average")?;
    let (b, t, f, c) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let mut y = alloc::vec![0.0; b * t * c];
    for (row, out) in x.data().chunks_exact(f * c).zip(y.chunks_exact_mut(c)) {
        for px in row.chunks_exact(c) {
            for (o, v) in out.iter_mut().zip(px) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|o| *o /= f as f64);
    }
    Ok(Tensor::from_parts(alloc::vec![b, t, c], y))
}

pub fn mel_average_backward(input_shape: &[usize], dy: &Tensor) -> Tensor {
    let (f, c) = (input_shape[2], input_shape[3]);
    let mut dx = Vec::with_capacity(input_shape.iter().product());
    for row in dy.data().chunks_exact(c) {
        for _ in 0..f {
            dx.extend(row.iter().map(|v| v / f as f64));
        }
    }
    Tensor::from_parts(input_shape.to_vec(), dx)
}

/// Repeat each row of a `rows x width` matrix `factor` times.
pub fn duplicate_frames(x: &[f64], width: usize, factor: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len() * factor);
    for row in x.chunks_exact(width) {
        for _ in 0..factor {
            out.extend_from_slice(row);
        }
    }
    out
}

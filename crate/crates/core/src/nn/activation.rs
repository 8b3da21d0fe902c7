use alloc::vec::Vec;
use rand::Rng;

use super::Tensor;
use crate::{Error, Result};

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Gradient of ReLU given its output.
pub fn relu_backward(y: &Tensor, dy: &Tensor) -> Tensor {
    let data = y
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&o, &d)| if o > 0.0 { d } else { 0.0 })
        .collect();
    Tensor::from_parts(y.shape().to_vec(), data)
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { slope * v })
}

/// Gradient of leaky ReLU given its input.
pub fn leaky_relu_backward(x: &Tensor, dy: &Tensor, slope: f64) -> Tensor {
    let data = x
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&v, &d)| if v > 0.0 { d } else { slope * d })
        .collect();
    Tensor::from_parts(x.shape().to_vec(), data)
}

/// Inverted dropout. Returns the output and the per-element scale
/// (`0` or `1 / (1 - p)`) that the backward pass multiplies by. With
/// `train == false` the input passes through unchanged.
pub fn dropout<R: Rng>(x: &Tensor, p: f64, train: bool, rng: &mut R) -> Result<(Tensor, Vec<f64>)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(alloc::format!(
            "dropout probability {p} outside [0, 1)"
        )));
    }
    if !train || p == 0.0 {
        return Ok((x.clone(), alloc::vec![1.0; x.len()]));
    }
    let keep = 1.0 / (1.0 - p);
    let mask: Vec<f64> = (0..x.len())
        .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
        .collect();
    let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
    Ok((Tensor::from_parts(x.shape().to_vec(), data), mask))
}

pub fn dropout_backward(mask: &[f64], dy: &Tensor) -> Tensor {
    let data = dy.data().iter().zip(mask).map(|(d, m)| d * m).collect();
    Tensor::from_parts(dy.shape().to_vec(), data)
}

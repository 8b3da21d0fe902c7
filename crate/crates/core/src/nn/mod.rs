//! Differentiable building blocks for the detector.
//!
//! Every layer exposes an explicit `forward` and a `backward` that takes
//! whatever the forward pass produced (inputs, outputs or a cache) and
//! accumulates parameter gradients into a [`Gradients`] buffer congruent
//! with the [`ParamStore`]. Activations are row-major with channels last:
//! `[batch, time, freq, channels]` in the convolutional stack and
//! `[batch, time, features]` afterwards.

mod activation;
mod batchnorm;
mod conv;
pub(crate) mod gemm;
mod gru;
mod linear;
mod loss;
mod optim;
mod params;
mod pool;
mod se;
mod tensor;

pub use activation::{
    dropout, dropout_backward, leaky_relu, leaky_relu_backward, relu, relu_backward,
};
pub use batchnorm::{BatchNorm, BnCache};
pub use conv::Conv2d;
pub use gru::{BiGru, BiGruCache, GruDirection};
pub use linear::Linear;
pub use loss::{
    class_weights_from_counts, softmax, softmax_weighted_ce_backward, weighted_ce_loss, PROB_FLOOR,
};
pub use optim::{adam_step, cosine_lr, AdamConfig, AdamState};
pub use params::{Gradients, Param, ParamId, ParamStore};
pub use pool::{
    avg_pool2d, avg_pool2d_backward, duplicate_frames, mel_average, mel_average_backward,
};
pub use se::{SeCache, SqueezeExcitation};
pub use tensor::Tensor;

use rand::Rng;

/// Whether a forward pass updates batch statistics and applies dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Glorot/Xavier uniform initialization.
pub(crate) fn xavier_uniform<R: Rng>(
    rng: &mut R,
    len: usize,
    fan_in: usize,
    fan_out: usize,
) -> alloc::vec::Vec<f64> {
    let limit = crate::math::sqrt(6.0 / (fan_in + fan_out) as f64);
    (0..len).map(|_| rng.gen_range(-limit..=limit)).collect()
}

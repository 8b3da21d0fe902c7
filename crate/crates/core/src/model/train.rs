use alloc::{format, vec::Vec};
use rand::Rng;

use super::Model;
use crate::nn::{
    adam_step, softmax, softmax_weighted_ce_backward, weighted_ce_loss, AdamConfig, AdamState,
    Gradients, Tensor,
};
use crate::{Error, Result};

pub const LEAKY_SLOPE: f64 = 0.01;

/// Majority label of each group of `factor` frames, ties going to the
/// larger class index so overlap wins over speech and speech over silence.
pub fn downsample_labels(labels: &[u8], factor: usize) -> Result<Vec<u8>> {
    if factor == 0 || labels.len() % factor != 0 {
        return Err(Error::InvalidArgument(format!(
            "{} labels cannot be grouped by {factor}",
            labels.len()
        )));
    }
    Ok(labels
        .chunks_exact(factor)
        .map(|group| {
            let mut counts = [0usize; 256];
            for &l in group {
                counts[l as usize] += 1;
            }
            let mut best = 0u8;
            for (label, &n) in counts.iter().enumerate() {
                if n > 0 && n >= counts[best as usize] {
                    best = label as u8;
                }
            }
            best
        })
        .collect())
}

impl Model {
    /// Mean weighted cross-entropy of a batch and its parameter gradients.
    ///
    /// `labels` holds `batch * seq_len` three-class frame labels; they are
    /// mapped into the model's class space and downsampled to the output
    /// frame rate.
    pub fn loss_and_gradients<R: Rng>(
        &mut self,
        batch: &Tensor,
        labels: &[u8],
        class_weights: &[f64],
        rng: &mut R,
    ) -> Result<(f64, Gradients)> {
        let b = batch.shape().first().copied().unwrap_or(0);
        if b == 0 || batch.is_empty() {
            return Err(Error::Empty("training batch"));
        }
        if labels.len() != b * self.config.seq_len {
            return Err(Error::Shape(format!(
                "{} labels for a batch of {b}",
                labels.len()
            )));
        }
        let mapped: Vec<u8> = labels.iter().map(|&l| self.config.map_label(l)).collect();
        let targets = downsample_labels(&mapped, self.config.time_reduction())?;
        let (logits, cache) = self.forward_train(batch, rng)?;
        let probs = softmax(&logits);
        let loss = weighted_ce_loss(&probs, &targets, class_weights)?;
        let dlogits = softmax_weighted_ce_backward(&probs, &targets, class_weights)?;
        let grads = self.backward(&cache, &dlogits)?;
        Ok((loss, grads))
    }
}

/// One forward/backward/Adam update. Returns the loss before the update.
pub fn train_step<R: Rng>(
    model: &mut Model,
    opt: &mut AdamState,
    batch: &Tensor,
    labels: &[u8],
    class_weights: &[f64],
    lr: f64,
    rng: &mut R,
) -> Result<f64> {
    let (loss, grads) = model.loss_and_gradients(batch, labels, class_weights, rng)?;
    if !loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteLoss { step: opt.step });
    }
    adam_step(model.params_mut(), &grads, opt, lr, AdamConfig::default())?;
    Ok(loss)
}

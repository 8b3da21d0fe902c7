use alloc::{format, vec::Vec};

use super::Tensor;
use crate::{math, Error, Result};

/// Probability floor inside the logarithm of the cross-entropy.
pub const PROB_FLOOR: f64 = 1e-12;

/// Row-wise softmax over the last axis, with max subtraction.
pub fn softmax(logits: &Tensor) -> Tensor {
    let k = *logits.shape().last().expect("softmax of a scalar");
    let mut out = logits.data().to_vec();
    for row in out.chunks_exact_mut(k) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = math::exp(*v - max);
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    Tensor::from_parts(logits.shape().to_vec(), out)
}

fn check(probs: &Tensor, labels: &[u8], weights: &[f64]) -> Result<usize> {
    let k = *probs.shape().last().unwrap_or(&0);
    if k == 0 || probs.len() / k != labels.len() {
        return Err(Error::Shape(format!(
            "{} labels for probabilities of shape {:?}",
            labels.len(),
            probs.shape()
        )));
    }
    if weights.len() != k {
        return Err(Error::Shape(format!(
            "{} class weights for {k} classes",
            weights.len()
        )));
    }
    if weights.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::InvalidArgument(
            "class weights must be positive".into(),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= k) {
        return Err(Error::InvalidLabel(bad));
    }
    Ok(k)
}

/// Class-weighted cross-entropy normalized by the total applied weight:
/// `sum_i w[y_i] * -ln p[i, y_i] / sum_i w[y_i]`.
pub fn weighted_ce_loss(probs: &Tensor, labels: &[u8], class_weights: &[f64]) -> Result<f64> {
    let k = check(probs, labels, class_weights)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (row, &y) in probs.data().chunks_exact(k).zip(labels) {
        let w = class_weights[y as usize];
        num += -w * math::ln(row[y as usize].max(PROB_FLOOR));
        den += w;
    }
    if den == 0.0 {
        return Err(Error::Empty("loss over zero frames"));
    }
    Ok(num / den)
}

/// Gradient of [`weighted_ce_loss`] of `softmax(logits)` with respect to
/// the logits: `w[y_i] * (p_i - onehot(y_i)) / sum_j w[y_j]`.
pub fn softmax_weighted_ce_backward(
    probs: &Tensor,
    labels: &[u8],
    class_weights: &[f64],
) -> Result<Tensor> {
    let k = check(probs, labels, class_weights)?;
    let den: f64 = labels.iter().map(|&y| class_weights[y as usize]).sum();
    let mut d = probs.data().to_vec();
    for (row, &y) in d.chunks_exact_mut(k).zip(labels) {
        let w = class_weights[y as usize] / den;
        row[y as usize] -= 1.0;
        row.iter_mut().for_each(|v| *v *= w);
    }
    Ok(Tensor::from_parts(probs.shape().to_vec(), d))
}

/// Inverse-frequency weights `w[c] = total / (K * counts[c])`, so that
/// `w[c] * counts[c]` is the same for every class.
pub fn class_weights_from_counts(counts: &[u64]) -> Result<Vec<f64>> {
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::ZeroClassCount(c));
    }
    if counts.is_empty() {
        return Err(Error::Empty("class counts"));
    }
    let total: u64 = counts.iter().sum();
    let k = counts.len() as f64;
    Ok(counts
        .iter()
        .map(|&n| total as f64 / (k * n as f64))
        .collect())
}

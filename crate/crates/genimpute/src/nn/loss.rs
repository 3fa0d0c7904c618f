use ndarray::Array2;

use crate::error::{Error, Result};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before any log.
pub const PROB_EPS: f64 = 1e-7;

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Mean cross-entropy of softmax outputs against integer class labels.
pub fn cross_entropy(probs: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    check_labels(probs, labels)?;
    let mut total = 0.0;
    for (row, &label) in probs.rows().into_iter().zip(labels.iter()) {
        total -= clamp_prob(row[label]).ln();
    }
    Ok(total / labels.len() as f64)
}

/// Gradient of [`cross_entropy`] w.r.t. the probabilities (to be fed through
/// the softmax layer's backward pass).
pub fn cross_entropy_grad(probs: &Array2<f64>, labels: &[usize]) -> Result<Array2<f64>> {
    check_labels(probs, labels)?;
    let b = labels.len() as f64;
    let mut grad = Array2::zeros(probs.raw_dim());
    for (i, &label) in labels.iter().enumerate() {
        grad[[i, label]] = -1.0 / (clamp_prob(probs[[i, label]]) * b);
    }
    Ok(grad)
}

fn check_labels(probs: &Array2<f64>, labels: &[usize]) -> Result<()> {
    if probs.nrows() != labels.len() {
        return Err(Error::shape(
            "cross entropy",
            format!("{} rows", labels.len()),
            format!("{} rows", probs.nrows()),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= probs.ncols()) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} out of range for {} classes",
            probs.ncols()
        )));
    }
    Ok(())
}

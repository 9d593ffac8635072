use ndarray::{Array, ArrayView, Dimension, Zip};

use super::sigmoid;
use crate::error::{Error, Result};

/// Mean squared error over all elements.
pub fn mse<D: Dimension>(a: ArrayView<f64, D>, b: ArrayView<f64, D>) -> f64 {
    let n = a.len().max(1) as f64;
    Zip::from(&a).and(&b).fold(0.0, |acc, &x, &y| acc + (x - y) * (x - y)) / n
}

/// Gradient of [`mse`] with respect to `a`.
pub fn mse_grad<D: Dimension>(a: ArrayView<f64, D>, b: ArrayView<f64, D>) -> Array<f64, D> {
    let n = a.len().max(1) as f64;
    let mut g = a.to_owned();
    Zip::from(&mut g).and(&b).for_each(|g, &y| *g = 2.0 * (*g - y) / n);
    g
}

/// Binary cross-entropy of a logit against a 0/1 target, stable for any logit.
pub fn bce_with_logits(logit: f64, target: f64) -> f64 {
    logit.max(0.0) - logit * target + (-logit.abs()).exp().ln_1p()
}

pub fn bce_with_logits_grad(logit: f64, target: f64) -> f64 {
    sigmoid(logit) - target
}

pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::validation("softmax of an empty vector"));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("softmax of non-finite logits"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Cross-entropy of softmax(logits) against a class index, plus its logit gradient.
pub fn softmax_cross_entropy(logits: &[f64], class: usize) -> Result<(f64, Vec<f64>)> {
    let p = softmax(logits)?;
    if class >= p.len() {
        return Err(Error::validation(format!("class {class} out of range for {} logits", p.len())));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    let loss = lse - logits[class];
    let mut grad = p;
    grad[class] -= 1.0;
    Ok((loss, grad))
}

//! Softmax helpers and the known-class cross-entropy used for pretraining.

use ndarray::{s, Array1, Array2, ArrayView1};

use crate::error::{Error, Result};

/// Numerically stable softmax of one logit vector.
pub fn softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut p = logits.mapv(|v| (v - max).exp());
    let sum = p.sum();
    p /= sum;
    p
}

pub fn log_softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let log_sum = logits.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    logits.mapv(|v| (v - max) - log_sum)
}

pub(crate) fn check_finite(logits: &Array2<f64>) -> Result<()> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite logits"));
    }
    Ok(())
}

/// Mean cross-entropy of the first `num_classes` logit columns against
/// 1-based gold labels. The returned gradient has the full width of
/// `logits`; columns past `num_classes` get zero.
pub fn cross_entropy_with_grad(
    logits: &Array2<f64>,
    golds: &[usize],
    num_classes: usize,
) -> Result<(f64, Array2<f64>)> {
    if logits.nrows() != golds.len() || golds.is_empty() {
        return Err(Error::Shape(format!(
            "{} logit rows for {} labels",
            logits.nrows(),
            golds.len()
        )));
    }
    if num_classes == 0 || num_classes > logits.ncols() {
        return Err(Error::invalid(format!("cannot restrict to {num_classes} classes")));
    }
    check_finite(logits)?;
    let n = golds.len() as f64;
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut total = 0.0;
    for (i, &gold) in golds.iter().enumerate() {
        if gold == 0 || gold > num_classes {
            return Err(Error::invalid(format!("label {gold} outside 1..={num_classes}")));
        }
        let row = logits.slice(s![i, ..num_classes]);
        let logp = log_softmax(row);
        total -= logp[gold - 1];
        let mut g = grad.slice_mut(s![i, ..num_classes]);
        g.assign(&logp.mapv(f64::exp));
        g[gold - 1] -= 1.0;
        g /= n;
    }
    Ok((total / n, grad))
}

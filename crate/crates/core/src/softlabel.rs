//! Softened (K+1)-way targets for known-class samples and the KL loss
//! that trains the classifier toward them.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::loss::{check_finite, log_softmax};

/// Target distribution over `K+1` classes: `1 - xi` on the gold class and
/// `xi` on the open class.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabelDistribution {
    pub probs: Array1<f64>,
    pub xi: f64,
}

/// Softens a known-class label (1-based `gold` in `1..=K`).
///
/// `xi >= 0.5` is allowed (it is needed to sweep `xi` past the midpoint) but
/// logged, since the open class then outweighs the gold class.
pub fn soften(gold: usize, num_known: usize, xi: f64) -> Result<SoftLabelDistribution> {
    if gold == 0 || gold > num_known {
        return Err(Error::invalid(format!(
            "soft labels apply to known classes 1..={num_known}, got {gold}"
        )));
    }
    if !(0.0..1.0).contains(&xi) {
        return Err(Error::invalid(format!("xi must be in [0, 1), got {xi}")));
    }
    if xi >= 0.5 {
        log::warn!("xi = {xi} puts at least as much mass on the open class as on the gold class");
    }
    let mut probs = Array1::zeros(num_known + 1);
    probs[gold - 1] = 1.0 - xi;
    probs[num_known] += xi;
    Ok(SoftLabelDistribution { probs, xi })
}

/// Batch-mean `KL(p || softmax(logits))` with `0 * log 0 = 0`.
pub fn kl_loss(targets: &[SoftLabelDistribution], logits: &Array2<f64>) -> Result<f64> {
    Ok(kl_loss_with_grad(targets, logits)?.0)
}

/// Loss and its gradient w.r.t. the logits, `(softmax(logits) - p) / batch`.
pub fn kl_loss_with_grad(
    targets: &[SoftLabelDistribution],
    logits: &Array2<f64>,
) -> Result<(f64, Array2<f64>)> {
    if targets.len() != logits.nrows() || targets.is_empty() {
        return Err(Error::Shape(format!(
            "{} targets for {} logit rows",
            targets.len(),
            logits.nrows()
        )));
    }
    check_finite(logits)?;
    let n = targets.len() as f64;
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut total = 0.0;
    for (i, p) in targets.iter().enumerate() {
        if p.probs.len() != logits.ncols() {
            return Err(Error::Shape(format!(
                "target width {} does not match {} logits",
                p.probs.len(),
                logits.ncols()
            )));
        }
        let logq = log_softmax(logits.row(i));
        total += p
            .probs
            .iter()
            .zip(logq.iter())
            .filter(|(&pc, _)| pc > 0.0)
            .map(|(&pc, &lq)| pc * (pc.ln() - lq))
            .sum::<f64>();
        let mut g = grad.row_mut(i);
        g.assign(&logq.mapv(f64::exp));
        g -= &p.probs;
        g /= n;
    }
    Ok((total / n, grad))
}

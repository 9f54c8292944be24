//! Pseudo open-class samples by interpolating hidden states of
//! different-class pairs at an intermediate encoder layer.

use ndarray::{s, Array1, Array2, Array3, Zip};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::encoder::{mean_pool, EncoderModel, HiddenStates};
use crate::error::{Error, Result};
use crate::loss::{check_finite, log_softmax};

/// `alpha` parameterises `Beta(alpha, alpha)`; `n_mix` is the layer whose
/// output is interpolated (`1 <= n_mix < T`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixupConfig {
    pub alpha: f64,
    pub n_mix: usize,
}

impl MixupConfig {
    pub fn validate(&self, num_layers: usize) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.n_mix == 0 || self.n_mix >= num_layers {
            return Err(Error::invalid(format!(
                "mixup layer {} must lie in 1..{num_layers}",
                self.n_mix
            )));
        }
        Ok(())
    }
}

/// Pairs `(i, j)` of batch positions with different labels, and one
/// interpolation weight per pair (`lambdas` may be empty before sampling).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MixupBatch {
    pub pairs: Vec<(usize, usize)>,
    pub lambdas: Vec<f64>,
}

impl MixupBatch {
    /// Number of pseudo samples, M.
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Pairs every position `i` with `perm[i]` for a uniformly random
/// permutation, dropping pairs whose labels agree (which includes `i == perm[i]`).
pub fn pair_by_shuffle<R: Rng + ?Sized>(labels: &[usize], rng: &mut R) -> MixupBatch {
    let mut perm: Vec<usize> = (0..labels.len()).collect();
    perm.shuffle(rng);
    let pairs = perm
        .into_iter()
        .enumerate()
        .filter(|&(i, j)| i != j && labels[i] != labels[j])
        .collect();
    MixupBatch {
        pairs,
        lambdas: Vec::new(),
    }
}

/// One draw from `Beta(alpha, alpha)`.
pub fn sample_lambda<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
    }
    let beta = Beta::new(alpha, alpha).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(beta.sample(rng).clamp(0.0, 1.0))
}

/// Pairs first, then one lambda per surviving pair, in pair order.
pub fn sample_mixup_batch<R: Rng + ?Sized>(labels: &[usize], alpha: f64, rng: &mut R) -> Result<MixupBatch> {
    let mut batch = pair_by_shuffle(labels, rng);
    batch.lambdas = (0..batch.len())
        .map(|_| sample_lambda(alpha, rng))
        .collect::<Result<_>>()?;
    Ok(batch)
}

/// `lambda * h_i + (1 - lambda) * h_j` for every pair. Each mixed sample is
/// valid wherever either parent is.
pub fn interpolate(h: &HiddenStates, batch: &MixupBatch) -> Result<HiddenStates> {
    if batch.lambdas.len() != batch.pairs.len() {
        return Err(Error::invalid("every mixup pair needs a lambda"));
    }
    if let Some(&bad) = batch.lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::invalid(format!("lambda {bad} outside [0, 1]")));
    }
    let (n, len, width) = h.values.dim();
    if let Some(&(i, j)) = batch.pairs.iter().find(|&&(i, j)| i >= n || j >= n) {
        return Err(Error::invalid(format!("pair ({i}, {j}) outside batch of {n}")));
    }
    let m = batch.len();
    let mut values = Array3::zeros((m, len, width));
    let mut mask = Array2::from_elem((m, len), false);
    for (k, (&(i, j), &lambda)) in batch.pairs.iter().zip(&batch.lambdas).enumerate() {
        Zip::from(values.slice_mut(s![k, .., ..]))
            .and(h.values.slice(s![i, .., ..]))
            .and(h.values.slice(s![j, .., ..]))
            .for_each(|out, &a, &b| *out = lambda * a + (1.0 - lambda) * b);
        Zip::from(mask.row_mut(k))
            .and(h.mask.row(i))
            .and(h.mask.row(j))
            .for_each(|out, &a, &b| *out = a || b);
    }
    HiddenStates::new(values, mask)
}

/// Sends the gradient of interpolated states back to their parents.
pub(crate) fn interpolate_backward(batch: &MixupBatch, d_mixed: &Array3<f64>, d_parents: &mut Array3<f64>) {
    for (k, (&(i, j), &lambda)) in batch.pairs.iter().zip(&batch.lambdas).enumerate() {
        let d = d_mixed.slice(s![k, .., ..]);
        d_parents.slice_mut(s![i, .., ..]).scaled_add(lambda, &d);
        d_parents.slice_mut(s![j, .., ..]).scaled_add(1.0 - lambda, &d);
    }
}

/// Intent representation of one pseudo sample: interpolate the layer-`n_mix`
/// states of two utterances (batches of one), continue through the remaining
/// layers, pool and apply the intent head.
pub fn mixup_forward(
    model: &EncoderModel,
    h_i: &HiddenStates,
    h_j: &HiddenStates,
    lambda: f64,
    n_mix: usize,
) -> Result<Array1<f64>> {
    if h_i.batch_size() != 1 || h_j.batch_size() != 1 {
        return Err(Error::invalid("mixup_forward takes one sample per side"));
    }
    let pair = HiddenStates::stack(&[h_i.clone(), h_j.clone()])?;
    let batch = MixupBatch {
        pairs: vec![(0, 1)],
        lambdas: vec![lambda],
    };
    let mixed = interpolate(&pair, &batch)?;
    let top = model.forward_layers(&mixed, n_mix, model.num_layers())?;
    let z = model.intent_head(&mean_pool(&top)?)?;
    Ok(z.row(0).to_owned())
}

/// Mean of `-log softmax(logits)[K+1]` over the M pseudo samples.
pub fn mixup_loss(logits: &Array2<f64>) -> Result<f64> {
    Ok(mixup_loss_with_grad(logits)?.0)
}

/// Loss and gradient `(softmax(logits) - onehot(K+1)) / M`.
pub fn mixup_loss_with_grad(logits: &Array2<f64>) -> Result<(f64, Array2<f64>)> {
    let m = logits.nrows();
    if m == 0 {
        return Err(Error::Empty("mixup loss needs at least one pseudo sample".into()));
    }
    check_finite(logits)?;
    let open = logits.ncols() - 1;
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut total = 0.0;
    for (i, row) in logits.rows().into_iter().enumerate() {
        let logq = log_softmax(row);
        total -= logq[open];
        let mut g = grad.row_mut(i);
        g.assign(&logq.mapv(f64::exp));
        g[open] -= 1.0;
        g /= m as f64;
    }
    Ok((total / m as f64, grad))
}

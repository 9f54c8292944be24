//! Two-stage training: supervised pretraining on the K known intents, then
//! open-intent training that combines the soft-label loss with the mixup
//! loss as `mu * L_S + (1 - mu) * L_M`.

use std::cmp::Ordering;
use std::time::Instant;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::data::{Batches, DatasetBundle, EncodedCorpus, Vocabulary};
use crate::encoder::{mean_pool, EncoderModel, EncoderParams};
use crate::error::{Error, Result};
use crate::eval::argmax;
use crate::loss::cross_entropy_with_grad;
use crate::mixup::{interpolate, interpolate_backward, mixup_loss_with_grad, sample_mixup_batch, MixupConfig};
use crate::optim::{AdamW, AdamWConfig};
use crate::rng::{self, Rng};
use crate::softlabel::{kl_loss_with_grad, soften};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Open-class mass of the soft labels.
    pub xi: f64,
    /// Weight of the soft-label loss; the mixup loss gets `1 - mu`.
    pub mu: f64,
    /// Beta(alpha, alpha) parameter for mixup weights.
    pub alpha: f64,
    /// Interpolation layer; `None` means the layer before the last.
    pub n_mix: Option<usize>,
    pub lr: f64,
    /// Small batches keep the number of steps per epoch high on desk-sized
    /// corpora; the open stage needs a few hundred steps before known-class
    /// validation accuracy recovers, and patience is counted in epochs.
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a better validation score before stopping. The open
    /// stage starts from a model that is already perfect on the known-only
    /// validation split and dips while it learns the open region, so the
    /// desk preset waits longer than the frozen-backbone one.
    pub patience: usize,
    pub warmup_fraction: f64,
    pub optimizer: AdamWConfig,
    pub seed: u64,
    /// Train with one-hot targets (`xi = 0`).
    pub disable_sl: bool,
    /// Skip mixup; the step loss is the soft-label loss alone.
    pub disable_mm: bool,
}

impl Default for TrainConfig {
    /// Settings for training the small encoder from scratch on CPU.
    fn default() -> Self {
        TrainConfig {
            xi: 0.3,
            mu: 0.3,
            alpha: 2.0,
            n_mix: None,
            lr: 1e-3,
            batch_size: 8,
            max_epochs: 30,
            patience: 15,
            warmup_fraction: 0.1,
            optimizer: AdamWConfig::default(),
            seed: 0,
            disable_sl: false,
            disable_mm: false,
        }
    }
}

impl TrainConfig {
    /// Settings for fine-tuning a pretrained backbone with all but its last layer frozen.
    pub fn frozen_backbone() -> Self {
        TrainConfig {
            lr: 2e-5,
            batch_size: 128,
            max_epochs: 100,
            patience: 10,
            ..TrainConfig::default()
        }
    }

    pub fn effective_xi(&self) -> f64 {
        if self.disable_sl {
            0.0
        } else {
            self.xi
        }
    }

    pub fn mixup(&self, num_layers: usize) -> Option<MixupConfig> {
        (!self.disable_mm).then(|| MixupConfig {
            alpha: self.alpha,
            n_mix: self.n_mix.unwrap_or(num_layers.saturating_sub(1)),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(Error::invalid(format!("mu must be in [0, 1], got {}", self.mu)));
        }
        if !(0.0..1.0).contains(&self.xi) {
            return Err(Error::invalid(format!("xi must be in [0, 1), got {}", self.xi)));
        }
        if self.patience < 1 {
            return Err(Error::invalid("patience must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::invalid("warmup fraction must be in [0, 1)"));
        }
        if self.batch_size < 1 || self.max_epochs < 1 {
            return Err(Error::invalid("batch size and max epochs must be at least 1"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("invalid learning rate {}", self.lr)));
        }
        if !self.disable_mm && !(self.alpha > 0.0) {
            return Err(Error::invalid(format!("alpha must be positive, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Linear warmup from 0 over the first `ceil(warmup_fraction * total)`
/// steps, then linear decay to 0 at `total_steps`.
pub fn lr_at(step: usize, total_steps: usize, cfg: &TrainConfig) -> f64 {
    let warmup = (cfg.warmup_fraction * total_steps as f64).ceil() as usize;
    let step = step.min(total_steps);
    if step < warmup {
        cfg.lr * step as f64 / warmup as f64
    } else if total_steps > warmup {
        cfg.lr * (total_steps - step) as f64 / (total_steps - warmup) as f64
    } else {
        cfg.lr
    }
}

/// True once the best entry of `history` (earliest on ties) is at least
/// `patience` epochs old.
pub fn should_stop<T: PartialOrd>(history: &[T], patience: usize) -> bool {
    match best_index(history) {
        Some(best) => history.len() - 1 - best >= patience,
        None => false,
    }
}

fn best_index<T: PartialOrd>(history: &[T]) -> Option<usize> {
    let mut best = None;
    for (i, v) in history.iter().enumerate() {
        match best {
            None => best = Some(i),
            Some(b) if v > &history[b] => best = Some(i),
            _ => {}
        }
    }
    best
}

/// Validation outcome of one epoch. Higher accuracy wins; equal accuracy
/// falls back to the lower validation loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValScore {
    pub accuracy: f64,
    pub loss: f64,
}

impl PartialOrd for ValScore {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.accuracy.partial_cmp(&other.accuracy)? {
            Ordering::Equal => other.loss.partial_cmp(&self.loss),
            ord => Some(ord),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Pretrain,
    Open,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    /// Cross-entropy when pretraining, soft-label KL in the open stage.
    pub primary_loss: f64,
    pub mixup_loss: Option<f64>,
    /// Pseudo samples in this step (M).
    pub pseudo_samples: usize,
    pub total_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub primary_loss: f64,
    pub mixup_loss: Option<f64>,
    pub total_loss: f64,
    pub validation: ValScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub stage: Stage,
    pub epochs: Vec<EpochRecord>,
    pub steps: Vec<StepRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    /// 1-based epoch at which training ended.
    pub stop_epoch: usize,
    pub wall_time_secs: f64,
}

/// Encoded train/validation splits (both known classes only).
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub train: EncodedCorpus,
    pub validation: EncodedCorpus,
    pub num_known: usize,
}

impl TrainingData {
    pub fn new(bundle: &DatasetBundle, vocab: &Vocabulary) -> Self {
        TrainingData {
            train: vocab.encode_corpus(&bundle.train),
            validation: vocab.encode_corpus(&bundle.validation),
            num_known: bundle.num_known(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Objective {
    Pretrain,
    Open {
        xi: f64,
        mu: f64,
        mixup: Option<MixupConfig>,
    },
}

/// Losses of one training step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    /// Cross-entropy when pretraining, soft-label KL in the open stage.
    pub primary: f64,
    pub mixup: Option<f64>,
    pub pseudo_samples: usize,
    pub total: f64,
}

/// Trains the K-way classifier with cross-entropy; keeps the parameters of
/// the best validation epoch.
pub fn pretrain(model: &mut EncoderModel, data: &TrainingData, cfg: &TrainConfig) -> Result<TrainReport> {
    if data.num_known < 2 {
        return Err(Error::invalid(format!(
            "pretraining needs at least 2 known classes, got {}",
            data.num_known
        )));
    }
    run_stage(model, data, cfg, Objective::Pretrain, Stage::Pretrain)
}

/// Trains the (K+1)-way classifier with soft labels and manifold mixup.
pub fn train_open(model: &mut EncoderModel, data: &TrainingData, cfg: &TrainConfig) -> Result<TrainReport> {
    let mixup = cfg.mixup(model.num_layers());
    if let Some(m) = mixup {
        m.validate(model.num_layers())?;
    }
    let objective = Objective::Open {
        xi: cfg.effective_xi(),
        mu: cfg.mu,
        mixup,
    };
    run_stage(model, data, cfg, objective, Stage::Open)
}

/// Loss of one batch and its gradient for every parameter, as used by a
/// training step of `stage`. Mixup pairs and weights are drawn from `rng`.
pub fn batch_gradients(
    model: &EncoderModel,
    ids: &[&[u32]],
    labels: &[usize],
    cfg: &TrainConfig,
    stage: Stage,
    rng: &mut Rng,
) -> Result<(StepLosses, EncoderParams)> {
    let objective = match stage {
        Stage::Pretrain => Objective::Pretrain,
        Stage::Open => Objective::Open {
            xi: cfg.effective_xi(),
            mu: cfg.mu,
            mixup: cfg.mixup(model.num_layers()),
        },
    };
    let mut grads = model.zero_grads();
    let losses = forward_backward(model, ids, labels, objective, rng, &mut grads)?;
    Ok((losses, grads))
}

fn run_stage(
    model: &mut EncoderModel,
    data: &TrainingData,
    cfg: &TrainConfig,
    objective: Objective,
    stage: Stage,
) -> Result<TrainReport> {
    cfg.validate()?;
    if data.num_known != model.num_known() {
        return Err(Error::invalid(format!(
            "data has {} known classes, model has {}",
            data.num_known,
            model.num_known()
        )));
    }
    if data.train.is_empty() || data.validation.is_empty() {
        return Err(Error::Empty("training and validation splits must be non-empty".into()));
    }
    if cfg.batch_size < 2 && !cfg.disable_mm && stage == Stage::Open {
        log::warn!("batch size {} leaves no room for mixup pairs", cfg.batch_size);
    }
    let started = Instant::now();
    let plan = Batches::new(data.train.len(), cfg.batch_size, true, cfg.seed)?;
    let total_steps = cfg.max_epochs * plan.per_epoch();
    let trainable = model.trainable().clone();
    let mut opt = AdamW::new(cfg.optimizer, model.params());
    let mut mix_rng = rng::stream(cfg.seed, "mixup");
    let mut grads = model.zero_grads();

    let mut steps = Vec::with_capacity(total_steps);
    let mut epochs = Vec::new();
    let mut history: Vec<ValScore> = Vec::new();
    let mut best: Option<(usize, EncoderParams)> = None;
    let mut step = 0;

    for epoch in 0..cfg.max_epochs {
        let (mut sum_primary, mut sum_mixup, mut sum_total, mut mixup_steps) = (0.0, 0.0, 0.0, 0);
        let batches = plan.epoch(epoch);
        for (b, indices) in batches.iter().enumerate() {
            grads.fill_zero();
            let (ids, labels) = data.train.select(indices);
            let losses = forward_backward(model, &ids, &labels, objective, &mut mix_rng, &mut grads)?;
            if !losses.total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step,
                    epoch: epoch + 1,
                    batch: b,
                    loss: losses.total,
                });
            }
            let lr = lr_at(step, total_steps, cfg);
            opt.step(model.params_mut(), &grads, &trainable, lr);
            sum_primary += losses.primary;
            sum_total += losses.total;
            if let Some(lm) = losses.mixup {
                sum_mixup += lm;
                mixup_steps += 1;
            }
            steps.push(StepRecord {
                step,
                lr,
                primary_loss: losses.primary,
                mixup_loss: losses.mixup,
                pseudo_samples: losses.pseudo_samples,
                total_loss: losses.total,
            });
            step += 1;
        }

        let score = validate(model, &data.validation, cfg, objective)?;
        let n = batches.len() as f64;
        let record = EpochRecord {
            epoch: epoch + 1,
            primary_loss: sum_primary / n,
            mixup_loss: (mixup_steps > 0).then(|| sum_mixup / mixup_steps as f64),
            total_loss: sum_total / n,
            validation: score,
        };
        log::info!(
            "{stage:?} epoch {}: loss {:.5} val acc {:.4} val loss {:.5}",
            record.epoch,
            record.total_loss,
            score.accuracy,
            score.loss
        );
        epochs.push(record);

        let improved = match history.iter().copied().reduce(|a, b| if b > a { b } else { a }) {
            None => true,
            Some(best_so_far) => score > best_so_far,
        };
        history.push(score);
        if improved {
            best = Some((epoch + 1, model.params().clone()));
        }
        if should_stop(&history, cfg.patience) {
            break;
        }
    }

    let (best_epoch, best_params) = best.expect("at least one epoch ran");
    *model.params_mut() = best_params;
    Ok(TrainReport {
        stage,
        stop_epoch: epochs.len(),
        epochs,
        steps,
        best_epoch,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}

fn forward_backward(
    model: &EncoderModel,
    ids: &[&[u32]],
    labels: &[usize],
    objective: Objective,
    rng: &mut Rng,
    grads: &mut EncoderParams,
) -> Result<StepLosses> {
    let depth = model.num_layers();
    let k = model.num_known();
    let (h0, embed_tape) = model.embed_batch_taped(ids)?;
    match objective {
        Objective::Pretrain => {
            let (top, tape) = model.forward_layers_taped(&h0, 0, depth)?;
            let (logits, readout) = model.readout_taped(&top)?;
            if !all_finite(&logits) {
                return Ok(StepLosses::non_finite());
            }
            let (loss, d_logits) = cross_entropy_with_grad(&logits, labels, k)?;
            let d_top = model.readout_backward(&readout, &d_logits, grads);
            let d_h0 = model.backward_layers(&tape, &d_top, grads);
            model.embed_backward(&embed_tape, &d_h0, grads);
            Ok(StepLosses {
                primary: loss,
                mixup: None,
                pseudo_samples: 0,
                total: loss,
            })
        }
        Objective::Open { xi, mu, mixup } => {
            let split = mixup.map_or(depth, |m| m.n_mix);
            let (mid, lower) = model.forward_layers_taped(&h0, 0, split)?;
            let (top, upper) = model.forward_layers_taped(&mid, split, depth)?;
            let (logits, readout) = model.readout_taped(&top)?;
            if !all_finite(&logits) {
                return Ok(StepLosses::non_finite());
            }
            let targets = labels
                .iter()
                .map(|&y| soften(y, k, xi))
                .collect::<Result<Vec<_>>>()?;
            let (soft_loss, mut d_logits) = kl_loss_with_grad(&targets, &logits)?;

            let mixed = match mixup {
                Some(cfg) => {
                    let batch = sample_mixup_batch(labels, cfg.alpha, rng)?;
                    if batch.is_empty() {
                        None
                    } else {
                        let h_mix = interpolate(&mid, &batch)?;
                        let (mix_top, mix_tape) = model.forward_layers_taped(&h_mix, split, depth)?;
                        let (mix_logits, mix_readout) = model.readout_taped(&mix_top)?;
                        if !all_finite(&mix_logits) {
                            return Ok(StepLosses::non_finite());
                        }
                        let (loss, d) = mixup_loss_with_grad(&mix_logits)?;
                        Some((batch, mix_tape, mix_readout, loss, d))
                    }
                }
                None => None,
            };

            let (total, mixup_loss, pseudo_samples) = match &mixed {
                Some((batch, _, _, lm, _)) => (mu * soft_loss + (1.0 - mu) * lm, Some(*lm), batch.len()),
                None => (soft_loss, None, 0),
            };

            let mut d_mid: Array3<f64>;
            if let Some((batch, mix_tape, mix_readout, _, mut d_mix)) = mixed {
                d_logits *= mu;
                d_mix *= 1.0 - mu;
                let d_top = model.readout_backward(&readout, &d_logits, grads);
                d_mid = model.backward_layers(&upper, &d_top, grads);
                let d_mix_top = model.readout_backward(&mix_readout, &d_mix, grads);
                let d_mixed = model.backward_layers(&mix_tape, &d_mix_top, grads);
                interpolate_backward(&batch, &d_mixed, &mut d_mid);
            } else {
                let d_top = model.readout_backward(&readout, &d_logits, grads);
                d_mid = model.backward_layers(&upper, &d_top, grads);
            }
            let d_h0 = model.backward_layers(&lower, &d_mid, grads);
            model.embed_backward(&embed_tape, &d_h0, grads);
            Ok(StepLosses {
                primary: soft_loss,
                mixup: mixup_loss,
                pseudo_samples,
                total,
            })
        }
    }
}

impl StepLosses {
    fn non_finite() -> Self {
        StepLosses {
            primary: f64::NAN,
            mixup: None,
            pseudo_samples: 0,
            total: f64::NAN,
        }
    }
}

fn all_finite(a: &Array2<f64>) -> bool {
    a.iter().all(|v| v.is_finite())
}

fn validate(
    model: &EncoderModel,
    data: &EncodedCorpus,
    cfg: &TrainConfig,
    objective: Objective,
) -> Result<ValScore> {
    let k = model.num_known();
    let depth = model.num_layers();
    let mut correct = 0usize;
    let mut primary_sum = 0.0;
    let (mut mixup_sum, mut mixup_count) = (0.0, 0usize);
    // Same pseudo samples every epoch, so epochs stay comparable.
    let mut val_rng = rng::stream(cfg.seed, "validation.mixup");
    let indices: Vec<usize> = (0..data.len()).collect();
    for chunk in indices.chunks(cfg.batch_size.max(2)) {
        let (ids, labels) = data.select(chunk);
        let h0 = model.embed_batch(&ids)?;
        match objective {
            Objective::Pretrain => {
                let top = model.forward_layers(&h0, 0, depth)?;
                let z = model.intent_head(&mean_pool(&top)?)?;
                let logits = model.classify(&z, k)?;
                correct += count_correct(&logits, &labels);
                let (loss, _) = cross_entropy_with_grad(&logits, &labels, k)?;
                primary_sum += loss * labels.len() as f64;
            }
            Objective::Open { xi, mixup, .. } => {
                let split = mixup.map_or(depth, |m| m.n_mix);
                let mid = model.forward_layers(&h0, 0, split)?;
                let top = model.forward_layers(&mid, split, depth)?;
                let z = model.intent_head(&mean_pool(&top)?)?;
                let logits = model.classify(&z, k + 1)?;
                correct += count_correct(&logits, &labels);
                let targets = labels.iter().map(|&y| soften(y, k, xi)).collect::<Result<Vec<_>>>()?;
                let (loss, _) = kl_loss_with_grad(&targets, &logits)?;
                primary_sum += loss * labels.len() as f64;
                if let Some(m) = mixup {
                    let batch = sample_mixup_batch(&labels, m.alpha, &mut val_rng)?;
                    if !batch.is_empty() {
                        let mixed = model.forward_layers(&interpolate(&mid, &batch)?, split, depth)?;
                        let z = model.intent_head(&mean_pool(&mixed)?)?;
                        let (lm, _) = mixup_loss_with_grad(&model.classify(&z, k + 1)?)?;
                        mixup_sum += lm * batch.len() as f64;
                        mixup_count += batch.len();
                    }
                }
            }
        }
    }
    let n = data.len() as f64;
    let primary = primary_sum / n;
    let loss = match objective {
        Objective::Open { mu, .. } if mixup_count > 0 => mu * primary + (1.0 - mu) * mixup_sum / mixup_count as f64,
        _ => primary,
    };
    Ok(ValScore {
        accuracy: correct as f64 / n,
        loss,
    })
}

fn count_correct(logits: &Array2<f64>, labels: &[usize]) -> usize {
    logits
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(row, &y)| argmax(row.as_slice().expect("standard layout")) + 1 == y)
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints() {
        let cfg = TrainConfig {
            lr: 1e-3,
            warmup_fraction: 0.1,
            ..TrainConfig::default()
        };
        assert_eq!(lr_at(0, 100, &cfg), 0.0);
        assert_eq!(lr_at(10, 100, &cfg), 1e-3);
        assert_eq!(lr_at(100, 100, &cfg), 0.0);
        assert!((lr_at(5, 100, &cfg) - 5e-4).abs() < 1e-18);
        assert!((lr_at(55, 100, &cfg) - 5e-4).abs() < 1e-15);
        // warmup length rounds up: ceil(0.1 * 15) = 2
        assert_eq!(lr_at(2, 15, &cfg), 1e-3);
    }

    #[test]
    fn schedule_without_warmup_starts_at_peak() {
        let cfg = TrainConfig {
            warmup_fraction: 0.0,
            ..TrainConfig::default()
        };
        assert_eq!(lr_at(0, 10, &cfg), cfg.lr);
    }

    #[test]
    fn early_stop_after_patience_non_improving_epochs() {
        let mut history = vec![0.5, 0.6];
        for i in 1..=10 {
            history.push(0.6);
            assert_eq!(should_stop(&history, 10), i == 10, "after {i} flat epochs");
        }
    }

    #[test]
    fn early_stop_examples() {
        let improving: Vec<f64> = (0..100).map(|i| i as f64).collect();
        for end in 1..=100 {
            assert!(!should_stop(&improving[..end], 10));
        }
        assert!(should_stop(&[0.9, 0.8], 1));
        assert!(!should_stop::<f64>(&[], 1));
    }

    #[test]
    fn val_score_orders_by_accuracy_then_loss() {
        let a = ValScore { accuracy: 0.9, loss: 1.0 };
        let b = ValScore { accuracy: 0.9, loss: 0.5 };
        let c = ValScore { accuracy: 0.95, loss: 2.0 };
        assert!(b > a);
        assert!(c > b);
        assert!(should_stop(&[b, a], 1));
        assert!(!should_stop(&[a, b], 1));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { mu: 1.5, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { patience: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { warmup_fraction: 1.0, ..TrainConfig::default() }.validate().is_err());
        TrainConfig::frozen_backbone().validate().unwrap();
        let cfg = TrainConfig { disable_sl: true, ..TrainConfig::default() };
        assert_eq!(cfg.effective_xi(), 0.0);
        assert_eq!(TrainConfig::default().mixup(4).unwrap().n_mix, 3);
        assert!(TrainConfig { disable_mm: true, ..TrainConfig::default() }.mixup(4).is_none());
    }
}

//! AdamW with decoupled weight decay and global-norm gradient clipping.
//! Frozen parameter groups are skipped entirely.

use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderParams, Trainability};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Clip the global gradient norm of trainable tensors to this value; `None` disables.
    pub max_grad_norm: Option<f64>,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            max_grad_norm: Some(1.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamW {
    cfg: AdamWConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig, params: &EncoderParams) -> Self {
        let zeros: Vec<Vec<f64>> = params
            .tensors()
            .iter()
            .map(|t| vec![0.0; t.tensor.values().len()])
            .collect();
        AdamW {
            cfg,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// L2 norm over the gradients of trainable tensors.
    pub fn grad_norm(grads: &EncoderParams, trainable: &Trainability) -> f64 {
        grads
            .tensors()
            .iter()
            .filter(|t| t.group.is_trainable(trainable))
            .flat_map(|t| t.tensor.values().iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// One update at learning rate `lr`. Returns the pre-clipping gradient norm.
    /// Weight decay applies to matrices only, not to biases or LayerNorm gains.
    pub fn step(
        &mut self,
        params: &mut EncoderParams,
        grads: &EncoderParams,
        trainable: &Trainability,
        lr: f64,
    ) -> f64 {
        let norm = Self::grad_norm(grads, trainable);
        let scale = match self.cfg.max_grad_norm {
            Some(max) if norm > max => max / (norm + 1e-6),
            _ => 1.0,
        };
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.cfg.beta1.powi(t);
        let c2 = 1.0 - self.cfg.beta2.powi(t);
        let AdamWConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
            ..
        } = self.cfg;

        let grad_tensors = grads.tensors();
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grad_tensors.iter())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            if !p.group.is_trainable(trainable) {
                continue;
            }
            let decay = if p.tensor.shape_vec().len() >= 2 { weight_decay } else { 0.0 };
            let values = p.tensor.values_mut();
            for (((w, &g), m), v) in values
                .iter_mut()
                .zip(g.tensor.values())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                let g = g * scale;
                *w -= lr * decay * *w;
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{EncoderConfig, EncoderModel};

    fn model() -> EncoderModel {
        let mut cfg = EncoderConfig::desk(10);
        cfg.num_layers = 2;
        cfg.hidden_size = 4;
        cfg.intent_dim = 4;
        cfg.num_heads = 1;
        cfg.ffn_size = 4;
        cfg.trainable = Trainability::last_layer_only(2);
        EncoderModel::new(cfg, 2, 0).unwrap()
    }

    fn ones(model: &EncoderModel) -> EncoderParams {
        let mut g = model.zero_grads();
        for t in g.tensors_mut() {
            t.tensor.values_mut().fill(1.0);
        }
        g
    }

    #[test]
    fn frozen_groups_are_untouched() {
        let mut m = model();
        let before = m.params().clone();
        let grads = ones(&m);
        let trainable = m.trainable().clone();
        let mut opt = AdamW::new(AdamWConfig::default(), m.params());
        opt.step(m.params_mut(), &grads, &trainable, 1e-2);
        let after = m.params();
        assert_eq!(after.layers[0], before.layers[0]);
        assert_eq!(after.token_embedding, before.token_embedding);
        assert_ne!(after.layers[1], before.layers[1]);
        assert_ne!(after.classifier_b, before.classifier_b);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut m = model();
        let before = m.params().classifier_b.clone();
        let grads = ones(&m);
        let trainable = m.trainable().clone();
        let mut opt = AdamW::new(
            AdamWConfig {
                max_grad_norm: None,
                ..AdamWConfig::default()
            },
            m.params(),
        );
        opt.step(m.params_mut(), &grads, &trainable, 0.1);
        for (a, b) in m.params().classifier_b.iter().zip(before.iter()) {
            assert!((b - a - 0.1).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let mut m = model();
        let before = m.params().clone();
        let grads = ones(&m);
        let trainable = m.trainable().clone();
        let mut opt = AdamW::new(AdamWConfig::default(), m.params());
        opt.step(m.params_mut(), &grads, &trainable, 0.0);
        assert_eq!(m.params(), &before);
    }
}

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which parameter groups receive optimizer updates. Layer indices are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trainability {
    pub embeddings: bool,
    pub layers: BTreeSet<usize>,
    pub intent_head: bool,
    pub classifier: bool,
}

impl Trainability {
    pub fn all(num_layers: usize) -> Self {
        Trainability {
            embeddings: true,
            layers: (1..=num_layers).collect(),
            intent_head: true,
            classifier: true,
        }
    }

    /// Only the last encoder layer plus the intent head and classifier.
    pub fn last_layer_only(num_layers: usize) -> Self {
        Trainability {
            embeddings: false,
            layers: [num_layers].into_iter().collect(),
            intent_head: true,
            classifier: true,
        }
    }

    pub fn is_empty(&self) -> bool {
        !self.embeddings && self.layers.is_empty() && !self.intent_head && !self.classifier
    }
}

/// Shape of the encoder: `num_layers` pre-norm transformer blocks of width
/// `hidden_size`, mean pooling, a ReLU intent head of width `intent_dim`
/// and a `(K+1)`-way linear classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub num_layers: usize,
    pub hidden_size: usize,
    pub intent_dim: usize,
    pub num_heads: usize,
    pub ffn_size: usize,
    /// Maximum number of tokens, excluding the prepended CLS.
    pub max_len: usize,
    pub vocab_size: usize,
    pub init_std: f64,
    pub layer_norm_eps: f64,
    pub trainable: Trainability,
}

impl EncoderConfig {
    /// Small CPU-trainable encoder: 4 layers, width 64, 4 heads.
    pub fn desk(vocab_size: usize) -> Self {
        let num_layers = 4;
        EncoderConfig {
            num_layers,
            hidden_size: 64,
            intent_dim: 64,
            num_heads: 4,
            ffn_size: 128,
            max_len: 32,
            vocab_size,
            init_std: 0.02,
            layer_norm_eps: 1e-5,
            trainable: Trainability::all(num_layers),
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_size / self.num_heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers < 2 {
            return Err(Error::invalid(format!(
                "encoder needs at least 2 layers for mixup, got {}",
                self.num_layers
            )));
        }
        let sizes = [
            ("hidden_size", self.hidden_size),
            ("intent_dim", self.intent_dim),
            ("num_heads", self.num_heads),
            ("ffn_size", self.ffn_size),
            ("max_len", self.max_len),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("{name} must be positive")));
        }
        if self.hidden_size % self.num_heads != 0 {
            return Err(Error::invalid(format!(
                "hidden size {} is not divisible by {} heads",
                self.hidden_size, self.num_heads
            )));
        }
        if self.vocab_size < 3 {
            return Err(Error::invalid("vocabulary must include the reserved ids"));
        }
        if !(self.init_std > 0.0 && self.layer_norm_eps > 0.0) {
            return Err(Error::invalid("init_std and layer_norm_eps must be positive"));
        }
        self.validate_trainable(&self.trainable)
    }

    pub(crate) fn validate_trainable(&self, t: &Trainability) -> Result<()> {
        if let Some(&bad) = t.layers.iter().find(|&&l| l == 0 || l > self.num_layers) {
            return Err(Error::invalid(format!(
                "trainable layer {bad} outside 1..={}",
                self.num_layers
            )));
        }
        if t.is_empty() {
            return Err(Error::invalid("no trainable parameters"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_config_is_valid() {
        EncoderConfig::desk(100).validate().unwrap();
    }

    #[test]
    fn rejects_single_layer_and_bad_heads() {
        let mut c = EncoderConfig::desk(100);
        c.num_layers = 1;
        c.trainable = Trainability::all(1);
        assert!(c.validate().is_err());
        let mut c = EncoderConfig::desk(100);
        c.num_heads = 3;
        assert!(c.validate().is_err());
    }

    #[test]
    fn rejects_empty_or_out_of_range_trainable_sets() {
        let c = EncoderConfig::desk(100);
        let empty = Trainability {
            embeddings: false,
            layers: BTreeSet::new(),
            intent_head: false,
            classifier: false,
        };
        assert!(c.validate_trainable(&empty).is_err());
        let mut bad = Trainability::all(4);
        bad.layers.insert(5);
        assert!(c.validate_trainable(&bad).is_err());
        c.validate_trainable(&Trainability::last_layer_only(4)).unwrap();
    }
}

#![allow(dead_code)]

use open_intent::data::{make_split, generate_synthetic, DatasetBundle, SynthConfig};
use open_intent::encoder::{EncoderConfig, EncoderModel, Trainability};
use open_intent::pipeline::{self, Prepared};

/// T=2, H=8, D=8 encoder with unit-scale weights.
pub fn tiny_config(vocab_size: usize) -> EncoderConfig {
    EncoderConfig {
        num_layers: 2,
        hidden_size: 8,
        intent_dim: 8,
        num_heads: 2,
        ffn_size: 16,
        max_len: 8,
        vocab_size,
        init_std: 0.5,
        layer_norm_eps: 1e-5,
        trainable: Trainability::all(2),
    }
}

pub fn tiny_model(num_known: usize, seed: u64) -> EncoderModel {
    EncoderModel::new(tiny_config(12), num_known, seed).unwrap()
}

/// A small synthetic corpus split into 3 known and 3 open intents.
pub fn small_bundle(seed: u64) -> DatasetBundle {
    let synth = SynthConfig {
        num_classes: 6,
        samples_per_class: 30,
        tokens_per_class: 6,
        seed,
        ..SynthConfig::default()
    };
    make_split(&generate_synthetic(&synth).unwrap(), 0.5, seed).unwrap()
}

pub fn small_prepared(seed: u64) -> (DatasetBundle, Prepared) {
    let bundle = small_bundle(seed);
    let prepared = pipeline::prepare(&bundle, 1).unwrap();
    (bundle, prepared)
}

/// Two-layer, width-16 encoder for quick training runs.
pub fn small_encoder(vocab_size: usize) -> EncoderConfig {
    EncoderConfig {
        num_layers: 2,
        hidden_size: 16,
        intent_dim: 16,
        num_heads: 2,
        ffn_size: 32,
        max_len: 16,
        vocab_size,
        init_std: 0.02,
        layer_norm_eps: 1e-5,
        trainable: Trainability::all(2),
    }
}

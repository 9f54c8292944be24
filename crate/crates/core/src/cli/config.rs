use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::data::{Format, SynthConfig};
use crate::error::{Error, Result};
use crate::eval::DEFAULT_MSP_THRESHOLD;
use crate::pipeline::{ExperimentSettings, ModelSettings, SweepParam};
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    Msp,
}

/// Fully resolved settings of one command. Written next to the outputs as
/// `resolved_config.json`; passing that file back with `--config` repeats
/// the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub format: Format,
    pub known_ratio: f64,
    /// The only source of randomness; overrides any seed inside `synth` or `train`.
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub synth: SynthConfig,
    pub model: ModelSettings,
    pub train: TrainConfig,
    pub disable_pretrain: bool,
    /// Directory of a pretrained model to start open-intent training from.
    pub init: Option<PathBuf>,
    /// Directory of a trained model to evaluate.
    pub model_dir: Option<PathBuf>,
    pub baseline: Option<Baseline>,
    pub threshold: f64,
    pub sweep_param: Option<SweepParam>,
    pub sweep_values: Option<Vec<f64>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            format: Format::Tsv,
            known_ratio: 0.5,
            seed: 0,
            out: None,
            synth: SynthConfig::default(),
            model: ModelSettings::default(),
            train: TrainConfig::default(),
            disable_pretrain: false,
            init: None,
            model_dir: None,
            baseline: None,
            threshold: DEFAULT_MSP_THRESHOLD,
            sweep_param: None,
            sweep_values: None,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
    }

    /// Defaults, then the `--config` file, then explicit flags.
    pub fn resolve(common: &CommonArgs, apply: impl FnOnce(&mut RunConfig)) -> Result<RunConfig> {
        let mut cfg = match &common.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        set(&mut cfg.seed, common.seed);
        set(&mut cfg.format, common.format);
        if let Some(out) = &common.out {
            cfg.out = Some(out.clone());
        }
        apply(&mut cfg);
        cfg.synth.seed = cfg.seed;
        cfg.train.seed = cfg.seed;
        Ok(cfg)
    }

    pub fn out(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::invalid("no output directory; pass --out"))
    }

    pub fn data(&self) -> Result<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| Error::invalid("no input data; pass --data"))
    }

    pub fn model_dir(&self) -> Result<&Path> {
        self.model_dir
            .as_deref()
            .ok_or_else(|| Error::invalid("no model directory; pass --model"))
    }

    pub fn experiment(&self) -> ExperimentSettings {
        ExperimentSettings {
            model: self.model.clone(),
            train: self.train.clone(),
            disable_pretrain: self.disable_pretrain,
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON run configuration; explicit flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Corpus file format.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// A corpus file, a directory of train/dev/test files, or a directory
    /// written by `split`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Fraction of intents treated as known.
    #[arg(long)]
    pub known_ratio: Option<f64>,
}

impl DataArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(d) = &self.data {
            cfg.data = Some(d.clone());
        }
        set(&mut cfg.known_ratio, self.known_ratio);
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub num_classes: Option<usize>,
    #[arg(long)]
    pub samples_per_class: Option<usize>,
    #[arg(long)]
    pub tokens_per_class: Option<usize>,
    #[arg(long)]
    pub noise_rate: Option<f64>,
    #[arg(long)]
    pub min_len: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
}

impl SynthArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let s = &mut cfg.synth;
        set(&mut s.num_classes, self.num_classes);
        set(&mut s.samples_per_class, self.samples_per_class);
        set(&mut s.tokens_per_class, self.tokens_per_class);
        set(&mut s.noise_rate, self.noise_rate);
        set(&mut s.min_len, self.min_len);
        set(&mut s.max_len, self.max_len);
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub num_layers: Option<usize>,
    #[arg(long)]
    pub hidden_size: Option<usize>,
    #[arg(long)]
    pub intent_dim: Option<usize>,
    #[arg(long)]
    pub num_heads: Option<usize>,
    #[arg(long)]
    pub ffn_size: Option<usize>,
    /// Maximum tokens per utterance; longer ones are truncated.
    #[arg(long = "max-tokens")]
    pub max_tokens: Option<usize>,
    /// Minimum training-set count for a token to enter the vocabulary.
    #[arg(long)]
    pub min_count: Option<usize>,
    /// Train only the last encoder layer, intent head and classifier.
    #[arg(long)]
    pub freeze_lower_layers: bool,
}

impl ModelArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let m = &mut cfg.model;
        set(&mut m.num_layers, self.num_layers);
        set(&mut m.hidden_size, self.hidden_size);
        set(&mut m.intent_dim, self.intent_dim);
        set(&mut m.num_heads, self.num_heads);
        set(&mut m.ffn_size, self.ffn_size);
        set(&mut m.max_len, self.max_tokens);
        set(&mut m.min_count, self.min_count);
        m.freeze_lower_layers |= self.freeze_lower_layers;
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    /// Open-class mass of the soft labels.
    #[arg(long)]
    pub xi: Option<f64>,
    /// Weight of the soft-label loss against the mixup loss.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Beta(alpha, alpha) parameter of the mixup weights.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Encoder layer whose outputs are interpolated (default: second to last).
    #[arg(long)]
    pub n_mix: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub warmup_fraction: Option<f64>,
    /// Train with one-hot targets (xi = 0).
    #[arg(long)]
    pub disable_sl: bool,
    /// Skip manifold mixup.
    #[arg(long)]
    pub disable_mm: bool,
    /// Skip pretraining on the known intents.
    #[arg(long)]
    pub disable_pretrain: bool,
}

impl TrainArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let t = &mut cfg.train;
        set(&mut t.xi, self.xi);
        set(&mut t.mu, self.mu);
        set(&mut t.alpha, self.alpha);
        if self.n_mix.is_some() {
            t.n_mix = self.n_mix;
        }
        set(&mut t.lr, self.lr);
        set(&mut t.batch_size, self.batch_size);
        set(&mut t.max_epochs, self.max_epochs);
        set(&mut t.patience, self.patience);
        set(&mut t.warmup_fraction, self.warmup_fraction);
        t.disable_sl |= self.disable_sl;
        t.disable_mm |= self.disable_mm;
        cfg.disable_pretrain |= self.disable_pretrain;
    }
}

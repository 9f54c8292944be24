//! End-to-end experiment helpers: vocabulary and encoding, the two training
//! stages, evaluation, ablation variants and one-parameter sweeps.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{build_vocab, generate_synthetic, make_split, DatasetBundle, EncodedCorpus, SynthConfig, Vocabulary};
use crate::encoder::{EncoderConfig, EncoderModel, Trainability};
use crate::error::{Error, Result};
use crate::eval::{self, MetricsReport};
use crate::trainer::{self, TrainConfig, TrainReport, TrainingData};

/// Encoder shape and vocabulary cutoff; the vocabulary size comes from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSettings {
    pub num_layers: usize,
    pub hidden_size: usize,
    pub intent_dim: usize,
    pub num_heads: usize,
    pub ffn_size: usize,
    pub max_len: usize,
    pub init_std: f64,
    pub layer_norm_eps: f64,
    pub min_count: usize,
    /// Train only the last encoder layer, the intent head and the classifier.
    pub freeze_lower_layers: bool,
}

impl Default for ModelSettings {
    fn default() -> Self {
        let d = EncoderConfig::desk(0);
        ModelSettings {
            num_layers: d.num_layers,
            hidden_size: d.hidden_size,
            intent_dim: d.intent_dim,
            num_heads: d.num_heads,
            ffn_size: d.ffn_size,
            max_len: d.max_len,
            init_std: d.init_std,
            layer_norm_eps: d.layer_norm_eps,
            min_count: 1,
            freeze_lower_layers: false,
        }
    }
}

impl ModelSettings {
    pub fn encoder_config(&self, vocab_size: usize) -> Result<EncoderConfig> {
        let trainable = if self.freeze_lower_layers {
            Trainability::last_layer_only(self.num_layers)
        } else {
            Trainability::all(self.num_layers)
        };
        let cfg = EncoderConfig {
            num_layers: self.num_layers,
            hidden_size: self.hidden_size,
            intent_dim: self.intent_dim,
            num_heads: self.num_heads,
            ffn_size: self.ffn_size,
            max_len: self.max_len,
            vocab_size,
            init_std: self.init_std,
            layer_norm_eps: self.layer_norm_eps,
            trainable,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Everything needed to train and evaluate one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ExperimentSettings {
    pub model: ModelSettings,
    pub train: TrainConfig,
    /// Skip pretraining and start open-intent training from random weights.
    pub disable_pretrain: bool,
}

/// A bundle turned into model inputs.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub vocab: Vocabulary,
    pub data: TrainingData,
    pub test: EncodedCorpus,
}

pub fn prepare(bundle: &DatasetBundle, min_count: usize) -> Result<Prepared> {
    let vocab = build_vocab(&bundle.train, min_count)?;
    Ok(Prepared {
        data: TrainingData::new(bundle, &vocab),
        test: vocab.encode_corpus(&bundle.test),
        vocab,
    })
}

/// Generates a synthetic corpus and splits it with the same seed.
pub fn synthetic_bundle(synth: &SynthConfig, known_ratio: f64) -> Result<DatasetBundle> {
    let corpus = generate_synthetic(synth)?;
    make_split(&corpus, known_ratio, synth.seed)
}

pub fn new_model(prepared: &Prepared, settings: &ExperimentSettings) -> Result<EncoderModel> {
    let cfg = settings.model.encoder_config(prepared.vocab.len())?;
    EncoderModel::new(cfg, prepared.data.num_known, settings.train.seed)
}

/// A fresh model trained on the K known classes.
pub fn pretrained_model(prepared: &Prepared, settings: &ExperimentSettings) -> Result<(EncoderModel, TrainReport)> {
    let mut model = new_model(prepared, settings)?;
    let report = trainer::pretrain(&mut model, &prepared.data, &settings.train)?;
    Ok((model, report))
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub model: EncoderModel,
    pub pretrain_report: Option<TrainReport>,
    pub open_report: TrainReport,
    pub metrics: MetricsReport,
}

/// Open-intent training from `start` (a pretrained model, or `None` for a
/// fresh one), followed by test evaluation.
pub fn finish_experiment(
    bundle: &DatasetBundle,
    prepared: &Prepared,
    settings: &ExperimentSettings,
    start: Option<(&EncoderModel, &TrainReport)>,
) -> Result<Experiment> {
    let (mut model, pretrain_report) = match start {
        Some((m, r)) => (m.clone(), Some(r.clone())),
        None => (new_model(prepared, settings)?, None),
    };
    let open_report = trainer::train_open(&mut model, &prepared.data, &settings.train)?;
    let metrics = eval::evaluate(&model, &prepared.test, settings.train.batch_size)?
        .with_class_names(bundle.spec.output_names())?;
    Ok(Experiment {
        model,
        pretrain_report,
        open_report,
        metrics,
    })
}

/// Both training stages (or just the second with `disable_pretrain`) and
/// test evaluation.
pub fn run_experiment(bundle: &DatasetBundle, settings: &ExperimentSettings) -> Result<Experiment> {
    let prepared = prepare(bundle, settings.model.min_count)?;
    if settings.disable_pretrain {
        return finish_experiment(bundle, &prepared, settings, None);
    }
    let (model, report) = pretrained_model(&prepared, settings)?;
    finish_experiment(bundle, &prepared, settings, Some((&model, &report)))
}

/// Metrics of the MSP baseline on a pretrained model.
pub fn msp_metrics(
    bundle: &DatasetBundle,
    model: &EncoderModel,
    test: &EncodedCorpus,
    threshold: f64,
    batch_size: usize,
) -> Result<MetricsReport> {
    eval::evaluate_msp(model, test, threshold, batch_size)?.with_class_names(bundle.spec.output_names())
}

/// The full method and its ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Full,
    WithoutSl,
    WithoutMm,
    WithoutSlMm,
    WithoutPretraining,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::WithoutSl,
        Variant::WithoutMm,
        Variant::WithoutSlMm,
        Variant::WithoutPretraining,
    ];

    pub fn apply(self, settings: &ExperimentSettings) -> ExperimentSettings {
        let mut s = settings.clone();
        match self {
            Variant::Full => {}
            Variant::WithoutSl => s.train.disable_sl = true,
            Variant::WithoutMm => s.train.disable_mm = true,
            Variant::WithoutSlMm => {
                s.train.disable_sl = true;
                s.train.disable_mm = true;
            }
            Variant::WithoutPretraining => s.disable_pretrain = true,
        }
        s
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::WithoutSl => "without-sl",
            Variant::WithoutMm => "without-mm",
            Variant::WithoutSlMm => "without-sl-mm",
            Variant::WithoutPretraining => "without-pretraining",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Hyperparameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParam {
    Xi,
    Mu,
    Alpha,
    NMix,
}

impl SweepParam {
    /// Default grid; `n-mix` covers every interpolation layer `1..T`.
    pub fn default_grid(self, num_layers: usize) -> Vec<f64> {
        match self {
            SweepParam::Xi => (0..=6).map(|i| i as f64 / 10.0).collect(),
            SweepParam::Mu => vec![0.1, 0.3, 0.5, 0.7, 0.9],
            SweepParam::Alpha => vec![0.5, 1.0, 2.0, 4.0, 8.0],
            SweepParam::NMix => (1..num_layers).map(|n| n as f64).collect(),
        }
    }

    pub fn apply(self, cfg: &mut TrainConfig, value: f64) -> Result<()> {
        match self {
            SweepParam::Xi => cfg.xi = value,
            SweepParam::Mu => cfg.mu = value,
            SweepParam::Alpha => cfg.alpha = value,
            SweepParam::NMix => {
                if value.fract() != 0.0 || value < 1.0 {
                    return Err(Error::invalid(format!("n-mix must be a positive integer, got {value}")));
                }
                cfg.n_mix = Some(value as usize);
            }
        }
        Ok(())
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Xi => "xi",
            SweepParam::Mu => "mu",
            SweepParam::Alpha => "alpha",
            SweepParam::NMix => "n-mix",
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xi" => Ok(SweepParam::Xi),
            "mu" => Ok(SweepParam::Mu),
            "alpha" => Ok(SweepParam::Alpha),
            "n-mix" | "n_mix" => Ok(SweepParam::NMix),
            _ => Err(Error::invalid(format!("unknown sweep parameter {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: f64,
    pub metrics: MetricsReport,
    pub best_epoch: usize,
    pub stop_epoch: usize,
}

/// Runs open-intent training once per grid value. None of the swept
/// parameters affect pretraining, so one pretrained model is shared.
pub fn sweep(
    bundle: &DatasetBundle,
    settings: &ExperimentSettings,
    param: SweepParam,
    values: &[f64],
) -> Result<Vec<SweepRow>> {
    let prepared = prepare(bundle, settings.model.min_count)?;
    let start = if settings.disable_pretrain {
        None
    } else {
        Some(pretrained_model(&prepared, settings)?)
    };
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let mut point = settings.clone();
        param.apply(&mut point.train, value)?;
        log::info!("sweep {param} = {value}");
        let exp = finish_experiment(bundle, &prepared, &point, start.as_ref().map(|(m, r)| (m, r)))?;
        rows.push(SweepRow {
            param,
            value,
            metrics: exp.metrics,
            best_epoch: exp.open_report.best_epoch,
            stop_epoch: exp.open_report.stop_epoch,
        });
    }
    Ok(rows)
}

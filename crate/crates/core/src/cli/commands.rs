use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Baseline, RunConfig};
use super::output::Staging;
use crate::data::{
    generate_synthetic, load_corpus, load_partitioned, make_split, make_split_partitioned, write_corpus,
    DatasetBundle, SplitSpec, Vocabulary, SPLITSPEC_FILE,
};
use crate::encoder::{load_checkpoint, save_checkpoint, EncoderModel};
use crate::error::{Error, Result};
use crate::eval::{self, dump_confusion, dump_embeddings, MetricsReport};
use crate::pipeline::{self, SweepRow};
use crate::trainer::TrainReport;

pub const MODEL_FILE: &str = "model.ckpt";
pub const VOCAB_FILE: &str = "vocab.json";
pub const MODEL_CONFIG_FILE: &str = "model_config.json";
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.json";
pub const TRAIN_REPORT_FILE: &str = "train_report.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const CONFUSION_FILE: &str = "confusion.csv";
pub const EMBEDDINGS_FILE: &str = "embeddings.tsv";
pub const SWEEP_JSON_FILE: &str = "sweep.json";
pub const SWEEP_TSV_FILE: &str = "sweep.tsv";

const EVAL_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReports {
    pub pretrain: Option<TrainReport>,
    pub open: Option<TrainReport>,
}

/// A model directory written by `pretrain`, `train` or `baseline`.
#[derive(Debug, Clone)]
pub struct SavedModel {
    pub model: EncoderModel,
    pub vocab: Vocabulary,
    pub spec: SplitSpec,
}

impl SavedModel {
    pub fn load(dir: &Path) -> Result<SavedModel> {
        let model = load_checkpoint(dir.join(MODEL_FILE))?;
        let vocab_path = dir.join(VOCAB_FILE);
        let text = fs::read_to_string(&vocab_path).map_err(|e| Error::file(&vocab_path, e))?;
        let vocab: Vocabulary = serde_json::from_str(&text)?;
        let spec = SplitSpec::load(dir.join(SPLITSPEC_FILE))?;
        if model.config().vocab_size != vocab.len() || model.num_known() != spec.num_known {
            return Err(Error::Checkpoint(format!(
                "{}: model does not match its vocabulary or split",
                dir.display()
            )));
        }
        Ok(SavedModel { model, vocab, spec })
    }
}

fn save_model(staging: &Staging, model: &EncoderModel, vocab: &Vocabulary, spec: &SplitSpec) -> Result<()> {
    save_checkpoint(model, staging.path(MODEL_FILE))?;
    staging.write_json(VOCAB_FILE, vocab)?;
    staging.write_json(MODEL_CONFIG_FILE, model.config())?;
    spec.save(staging.path(SPLITSPEC_FILE))
}

/// Builds the dataset bundle named by `--data`. With `spec`, the known
/// classes come from that split instead of being drawn anew.
pub fn load_bundle(cfg: &RunConfig, spec: Option<&SplitSpec>) -> Result<DatasetBundle> {
    let data = cfg.data()?;
    if data.is_dir() && data.join(SPLITSPEC_FILE).is_file() {
        let bundle = DatasetBundle::load(data, cfg.format)?;
        if let Some(spec) = spec {
            if &bundle.spec != spec {
                return Err(Error::invalid(format!(
                    "{} was split differently from the model",
                    data.display()
                )));
            }
        }
        return Ok(bundle);
    }
    if data.is_dir() {
        let (train, validation, test) = load_partitioned(data, cfg.format)?;
        return match spec {
            Some(s) => DatasetBundle::from_spec_partitioned(&train, &validation, &test, s.clone()),
            None => make_split_partitioned(&train, &validation, &test, cfg.known_ratio, cfg.seed),
        };
    }
    let full = load_corpus(data, cfg.format)?;
    match spec {
        Some(s) => DatasetBundle::from_spec(&full, s.clone()),
        None => make_split(&full, cfg.known_ratio, cfg.seed),
    }
}

fn begin(cfg: &RunConfig) -> Result<Staging> {
    cfg.train.validate()?;
    let staging = Staging::new(cfg.out()?)?;
    staging.write_json(RESOLVED_CONFIG_FILE, cfg)?;
    Ok(staging)
}

fn finish(staging: Staging) -> Result<()> {
    let dir = staging.commit()?;
    println!("wrote {}", dir.display());
    Ok(())
}

fn print_metrics(label: &str, m: &MetricsReport) {
    println!(
        "{label}: accuracy {:.4}  macro-F1 {:.4}  known F1 {:.4}  open F1 {:.4}  open recall {:.4}",
        m.accuracy, m.macro_f1_all, m.macro_f1_known, m.f1_open, m.recall_open
    );
}

pub fn synth(cfg: &RunConfig) -> Result<()> {
    let staging = begin(cfg)?;
    let corpus = generate_synthetic(&cfg.synth)?;
    write_corpus(&corpus, staging.path(&format!("corpus.{}", cfg.format.extension())), cfg.format)?;
    println!("{} utterances, {} intents", corpus.len(), corpus.num_classes());
    finish(staging)
}

pub fn split(cfg: &RunConfig) -> Result<()> {
    let staging = begin(cfg)?;
    let bundle = load_bundle(cfg, None)?;
    bundle.save(staging.path(""), cfg.format)?;
    println!(
        "{} known of {} intents; train {}, validation {}, test {}",
        bundle.num_known(),
        bundle.spec.class_names.len(),
        bundle.train.len(),
        bundle.validation.len(),
        bundle.test.len()
    );
    finish(staging)
}

pub fn pretrain(cfg: &RunConfig) -> Result<()> {
    let staging = begin(cfg)?;
    let bundle = load_bundle(cfg, None)?;
    let settings = cfg.experiment();
    let prepared = pipeline::prepare(&bundle, settings.model.min_count)?;
    let (model, report) = pipeline::pretrained_model(&prepared, &settings)?;
    save_model(&staging, &model, &prepared.vocab, &bundle.spec)?;
    staging.write_json(
        TRAIN_REPORT_FILE,
        &StageReports {
            pretrain: Some(report),
            open: None,
        },
    )?;
    finish(staging)
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let staging = begin(cfg)?;
    let settings = cfg.experiment();
    let (bundle, prepared, start) = match &cfg.init {
        Some(dir) if !cfg.disable_pretrain => {
            let saved = SavedModel::load(dir)?;
            let bundle = load_bundle(cfg, Some(&saved.spec))?;
            let prepared = pipeline::prepare(&bundle, settings.model.min_count)?;
            if prepared.vocab != saved.vocab {
                return Err(Error::invalid(format!(
                    "{}: vocabulary differs from the one built from the training data",
                    dir.display()
                )));
            }
            (bundle, prepared, Some((saved.model, None)))
        }
        _ => {
            let bundle = load_bundle(cfg, None)?;
            let prepared = pipeline::prepare(&bundle, settings.model.min_count)?;
            let start = if cfg.disable_pretrain {
                None
            } else {
                let (m, r) = pipeline::pretrained_model(&prepared, &settings)?;
                Some((m, Some(r)))
            };
            (bundle, prepared, start)
        }
    };
    let mut model = match &start {
        Some((m, _)) => m.clone(),
        None => pipeline::new_model(&prepared, &settings)?,
    };
    let open = crate::trainer::train_open(&mut model, &prepared.data, &settings.train)?;
    save_model(&staging, &model, &prepared.vocab, &bundle.spec)?;
    staging.write_json(
        TRAIN_REPORT_FILE,
        &StageReports {
            pretrain: start.and_then(|(_, r)| r),
            open: Some(open),
        },
    )?;
    finish(staging)
}

/// Evaluates a saved model on the test split; `baseline` selects the MSP
/// decision rule instead of the (K+1)-way argmax.
fn evaluate_saved(staging: &Staging, cfg: &RunConfig, saved: &SavedModel, baseline: Option<Baseline>) -> Result<()> {
    let bundle = load_bundle(cfg, Some(&saved.spec))?;
    let test = saved.vocab.encode_corpus(&bundle.test);
    let metrics = match baseline {
        Some(Baseline::Msp) => eval::evaluate_msp(&saved.model, &test, cfg.threshold, EVAL_BATCH)?,
        None => eval::evaluate(&saved.model, &test, EVAL_BATCH)?,
    }
    .with_class_names(saved.spec.output_names())?;
    staging.write_text(METRICS_FILE, &(metrics.to_json()? + "\n"))?;
    dump_confusion(&metrics, staging.path(CONFUSION_FILE))?;
    dump_embeddings(&saved.model, &test, staging.path(EMBEDDINGS_FILE), EVAL_BATCH)?;
    print_metrics(if baseline.is_some() { "msp" } else { "test" }, &metrics);
    Ok(())
}

pub fn eval(cfg: &RunConfig) -> Result<()> {
    let staging = begin(cfg)?;
    let saved = SavedModel::load(cfg.model_dir()?)?;
    evaluate_saved(&staging, cfg, &saved, cfg.baseline)?;
    finish(staging)
}

/// MSP on a pretrained model; trains one first when no `--model` is given.
pub fn baseline(cfg: &RunConfig) -> Result<()> {
    let staging = begin(cfg)?;
    let saved = match &cfg.model_dir {
        Some(dir) => SavedModel::load(dir)?,
        None => {
            let bundle = load_bundle(cfg, None)?;
            let settings = cfg.experiment();
            let prepared = pipeline::prepare(&bundle, settings.model.min_count)?;
            let (model, report) = pipeline::pretrained_model(&prepared, &settings)?;
            save_model(&staging, &model, &prepared.vocab, &bundle.spec)?;
            staging.write_json(
                TRAIN_REPORT_FILE,
                &StageReports {
                    pretrain: Some(report),
                    open: None,
                },
            )?;
            SavedModel {
                model,
                vocab: prepared.vocab,
                spec: bundle.spec,
            }
        }
    };
    evaluate_saved(&staging, cfg, &saved, Some(Baseline::Msp))?;
    finish(staging)
}

pub fn sweep(cfg: &RunConfig) -> Result<()> {
    let param = cfg
        .sweep_param
        .ok_or_else(|| Error::invalid("no sweep parameter; pass --param"))?;
    let values = match &cfg.sweep_values {
        Some(v) if !v.is_empty() => v.clone(),
        Some(_) => return Err(Error::invalid("empty sweep grid")),
        None => param.default_grid(cfg.model.num_layers),
    };
    let staging = begin(cfg)?;
    let bundle = load_bundle(cfg, None)?;
    let rows = pipeline::sweep(&bundle, &cfg.experiment(), param, &values)?;
    staging.write_json(SWEEP_JSON_FILE, &rows)?;
    let table = sweep_table(&rows);
    staging.write_text(SWEEP_TSV_FILE, &table)?;
    print!("{table}");
    finish(staging)
}

pub fn sweep_table(rows: &[SweepRow]) -> String {
    let mut out = String::new();
    if let Some(first) = rows.first() {
        let _ = writeln!(
            out,
            "{}\taccuracy\tmacro_f1_all\tmacro_f1_known\tf1_open\trecall_open\tbest_epoch",
            first.param
        );
    }
    for r in rows {
        let m = &r.metrics;
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.value, m.accuracy, m.macro_f1_all, m.macro_f1_known, m.f1_open, m.recall_open, r.best_epoch
        );
    }
    out
}

//! Command-line front end. Every command writes its outputs into `--out`
//! atomically, together with the resolved configuration.

mod commands;
mod config;
mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Result;
use crate::pipeline::SweepParam;

pub use commands::{
    load_bundle, sweep_table, SavedModel, StageReports, CONFUSION_FILE, EMBEDDINGS_FILE, METRICS_FILE,
    MODEL_CONFIG_FILE, MODEL_FILE, RESOLVED_CONFIG_FILE, SWEEP_JSON_FILE, SWEEP_TSV_FILE, TRAIN_REPORT_FILE,
    VOCAB_FILE,
};
pub use config::{Baseline, CommonArgs, DataArgs, ModelArgs, RunConfig, SynthArgs, TrainArgs};
pub use output::Staging;

#[derive(Debug, Parser)]
#[command(name = "open-intent", version, about = "Open intent classification with soft labels and manifold mixup")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic intent corpus.
    Synth {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// Choose known intents and partition a corpus into train/validation/test.
    Split {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Train the K-way classifier on the known intents.
    Pretrain(TrainCommand),
    /// Pretrain (unless disabled or --init is given), then train the open class.
    Train {
        #[command(flatten)]
        run: TrainCommand,
        /// Model directory from `pretrain` to start from.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Evaluate a model directory on its test split.
    Eval(EvalCommand),
    /// Maximum-softmax-probability baseline on a pretrained model.
    Baseline {
        #[command(flatten)]
        eval: EvalCommand,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Train once per value of one hyperparameter and tabulate test metrics.
    Sweep {
        #[command(flatten)]
        run: TrainCommand,
        #[arg(long, value_enum)]
        param: Option<SweepParam>,
        /// Comma-separated grid; defaults to the parameter's standard grid.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct TrainCommand {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub train: TrainArgs,
}

impl TrainCommand {
    fn resolve(&self, extra: impl FnOnce(&mut RunConfig)) -> Result<RunConfig> {
        RunConfig::resolve(&self.common, |c| {
            self.data.apply(c);
            self.model.apply(c);
            self.train.apply(c);
            extra(c);
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvalCommand {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Model directory written by `pretrain`, `train` or `baseline`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub baseline: Option<Baseline>,
    /// MSP confidence threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
}

impl EvalCommand {
    fn apply(&self, c: &mut RunConfig) {
        self.data.apply(c);
        if let Some(m) = &self.model {
            c.model_dir = Some(m.clone());
        }
        if self.baseline.is_some() {
            c.baseline = self.baseline;
        }
        if let Some(t) = self.threshold {
            c.threshold = t;
        }
    }
}

/// Resolves the configuration of a parsed command line and runs it.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common, synth } => commands::synth(&RunConfig::resolve(&common, |c| synth.apply(c))?),
        Command::Split { common, data } => commands::split(&RunConfig::resolve(&common, |c| data.apply(c))?),
        Command::Pretrain(run) => commands::pretrain(&run.resolve(|_| {})?),
        Command::Train { run, init } => commands::train(&run.resolve(|c| {
            if init.is_some() {
                c.init = init;
            }
        })?),
        Command::Eval(e) => commands::eval(&RunConfig::resolve(&e.common, |c| e.apply(c))?),
        Command::Baseline { eval, model, train } => commands::baseline(&RunConfig::resolve(&eval.common, |c| {
            eval.apply(c);
            model.apply(c);
            train.apply(c);
            c.baseline = Some(Baseline::Msp);
        })?),
        Command::Sweep { run, param, values } => commands::sweep(&run.resolve(|c| {
            if param.is_some() {
                c.sweep_param = param;
            }
            if values.is_some() {
                c.sweep_values = values;
            }
        })?),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from_args<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| crate::Error::invalid(e.to_string()))?;
    run(cli)
}

// Pretrains on the known intents of a synthetic corpus, trains the open
// class with soft labels and manifold mixup, and compares the result with
// the maximum-softmax-probability baseline.

use open_intent::data::SynthConfig;
use open_intent::eval::{self, DEFAULT_MSP_THRESHOLD};
use open_intent::pipeline::{self, ExperimentSettings};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let bundle = pipeline::synthetic_bundle(&SynthConfig::default(), 0.5)?;
    let settings = ExperimentSettings::default();
    let prepared = pipeline::prepare(&bundle, settings.model.min_count)?;

    let (pretrained, pre_report) = pipeline::pretrained_model(&prepared, &settings)?;
    println!(
        "pretraining: best epoch {} of {}, validation accuracy {:.3}, {:.1}s",
        pre_report.best_epoch,
        pre_report.stop_epoch,
        pre_report.epochs[pre_report.best_epoch - 1].validation.accuracy,
        pre_report.wall_time_secs
    );

    let msp = eval::evaluate_msp(&pretrained, &prepared.test, DEFAULT_MSP_THRESHOLD, 64)?;
    let exp = pipeline::finish_experiment(&bundle, &prepared, &settings, Some((&pretrained, &pre_report)))?;
    println!(
        "open training: best epoch {} of {}, {:.1}s",
        exp.open_report.best_epoch, exp.open_report.stop_epoch, exp.open_report.wall_time_secs
    );
    for (name, m) in [("msp", &msp), ("slmm", &exp.metrics)] {
        println!(
            "{name:>5}: accuracy {:.3}  macro-F1 {:.3}  known F1 {:.3}  open F1 {:.3}  open recall {:.3}",
            m.accuracy, m.macro_f1_all, m.macro_f1_known, m.f1_open, m.recall_open
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

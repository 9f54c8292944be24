// The maximum-softmax-probability baseline on a pretrained K-way model,
// at several confidence thresholds.

use open_intent::data::SynthConfig;
use open_intent::eval::evaluate_msp;
use open_intent::pipeline::{self, ExperimentSettings};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let bundle = pipeline::synthetic_bundle(&SynthConfig::default(), 0.5)?;
    let settings = ExperimentSettings::default();
    let prepared = pipeline::prepare(&bundle, 1)?;
    let (model, _) = pipeline::pretrained_model(&prepared, &settings)?;
    println!("threshold  accuracy  open-F1  known-F1");
    for threshold in [0.5, 0.7, 0.9, 0.99, 0.999] {
        let m = evaluate_msp(&model, &prepared.test, threshold, 64)?;
        println!("{threshold:>9}  {:>8.3}  {:>7.3}  {:>8.3}", m.accuracy, m.f1_open, m.macro_f1_known);
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

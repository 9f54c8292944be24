// The full method against its ablations on one synthetic split. All
// variants except the one without pretraining share one pretrained model.

use open_intent::data::SynthConfig;
use open_intent::pipeline::{self, ExperimentSettings, Variant};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let bundle = pipeline::synthetic_bundle(&SynthConfig::default(), 0.5)?;
    let base = ExperimentSettings::default();
    let prepared = pipeline::prepare(&bundle, 1)?;
    let (pretrained, report) = pipeline::pretrained_model(&prepared, &base)?;

    println!("{:<20} accuracy  macro-F1  open-F1  open-recall", "variant");
    for variant in Variant::ALL {
        let settings = variant.apply(&base);
        let start = (!settings.disable_pretrain).then_some((&pretrained, &report));
        let exp = pipeline::finish_experiment(&bundle, &prepared, &settings, start)?;
        let m = &exp.metrics;
        println!(
            "{:<20} {:>8.3}  {:>8.3}  {:>7.3}  {:>11.3}",
            variant.name(),
            m.accuracy,
            m.macro_f1_all,
            m.f1_open,
            m.recall_open
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

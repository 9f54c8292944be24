// Metrics from predictions, plus the confusion-matrix and embedding dumps.

use open_intent::eval::{compute_metrics, dump_confusion, dump_embeddings};
use open_intent::pipeline::{self, ExperimentSettings};
use open_intent::trainer::TrainConfig;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let m = compute_metrics(&[1, 2, 2, 3], &[1, 1, 2, 3], 2)?
        .with_class_names(vec!["weather".into(), "music".into(), "<open>".into()])?;
    println!(
        "accuracy {}  macro-F1 {:.4}  known {:.4}  open {}",
        m.accuracy, m.macro_f1_all, m.macro_f1_known, m.f1_open
    );
    for c in &m.per_class {
        println!("  {:<8} p={:.3} r={:.3} f1={:.3} n={}", m.class_names[c.class - 1], c.precision, c.recall, c.f1, c.support);
    }

    let dir = tempfile::tempdir()?;
    let confusion = dir.path().join("confusion.csv");
    dump_confusion(&m, &confusion)?;
    print!("{}", std::fs::read_to_string(&confusion)?);

    let bundle = pipeline::synthetic_bundle(&open_intent::data::SynthConfig::default(), 0.5)?;
    let prepared = pipeline::prepare(&bundle, 1)?;
    let settings = ExperimentSettings {
        train: TrainConfig {
            max_epochs: 1,
            ..TrainConfig::default()
        },
        ..ExperimentSettings::default()
    };
    let model = pipeline::new_model(&prepared, &settings)?;
    let embeddings = dir.path().join("embeddings.tsv");
    dump_embeddings(&model, &prepared.test, &embeddings, 64)?;
    let text = std::fs::read_to_string(&embeddings)?;
    let width = text.lines().next().map_or(0, |l| l.split('\t').count() - 1);
    println!("embeddings.tsv: {} rows of label + {width} values", text.lines().count());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

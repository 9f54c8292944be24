// Drives the command-line interface in-process: synthesize, split,
// pretrain, train, evaluate, and run the MSP baseline.

use open_intent::cli::run_from_args;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let small = ["--max-epochs", "3", "--num-layers", "2", "--hidden-size", "32", "--intent-dim", "32"];

    run_from_args(["open-intent", "synth", "--num-classes", "6", "--samples-per-class", "40", "--out", &p("syn")])?;
    let corpus = format!("{}/corpus.tsv", p("syn"));
    run_from_args(["open-intent", "split", "--data", &corpus, "--known-ratio", "0.5", "--out", &p("split")])?;

    let split = p("split");
    let init = p("pre");
    let out = p("model");
    let mut pretrain = vec!["open-intent", "pretrain", "--data", &split, "--out", &init];
    pretrain.extend(small);
    run_from_args(pretrain)?;

    let mut train = vec!["open-intent", "train", "--data", &split, "--init", &init, "--out", &out];
    train.extend(small);
    run_from_args(train)?;

    run_from_args(["open-intent", "eval", "--data", &split, "--model", &out, "--out", &p("eval")])?;
    run_from_args(["open-intent", "baseline", "--data", &split, "--model", &init, "--out", &p("msp")])?;

    for file in ["eval/metrics.json", "eval/confusion.csv", "model/train_report.json", "msp/resolved_config.json"] {
        println!("{file}: {} bytes", std::fs::metadata(dir.path().join(file))?.len());
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

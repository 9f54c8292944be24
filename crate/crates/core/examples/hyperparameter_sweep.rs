// Sweeps one hyperparameter (default: xi) over its standard grid.
// Pass `mu`, `alpha` or `n-mix` as the first argument to sweep another.

use open_intent::cli::sweep_table;
use open_intent::data::SynthConfig;
use open_intent::pipeline::{self, ExperimentSettings, SweepParam};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let param: SweepParam = std::env::args().nth(1).as_deref().unwrap_or("xi").parse()?;
    let bundle = pipeline::synthetic_bundle(&SynthConfig::default(), 0.5)?;
    let settings = ExperimentSettings::default();
    let grid = param.default_grid(settings.model.num_layers);
    let rows = pipeline::sweep(&bundle, &settings, param, &grid)?;
    print!("{}", sweep_table(&rows));
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

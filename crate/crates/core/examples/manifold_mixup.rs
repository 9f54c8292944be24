// Builds pseudo open-intent samples from a batch: shuffle pairing, Beta
// weights, interpolation at layer n, and the open-class loss.

use ndarray::array;
use open_intent::encoder::{EncoderConfig, EncoderModel};
use open_intent::mixup::{interpolate, mixup_forward, mixup_loss, sample_mixup_batch, MixupConfig};
use open_intent::rng;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = EncoderConfig::desk(30);
    let model = EncoderModel::new(cfg.clone(), 3, 1)?;
    let mix = MixupConfig {
        alpha: 2.0,
        n_mix: cfg.num_layers - 1,
    };
    mix.validate(cfg.num_layers)?;

    let ids: [&[u32]; 6] = [&[3, 4, 5], &[6, 7], &[8, 9, 10, 11], &[12, 13], &[14, 15, 16], &[17]];
    let labels = [1, 1, 2, 2, 3, 3];
    let mut r = rng::stream(0, "mixup");
    let batch = sample_mixup_batch(&labels, mix.alpha, &mut r)?;
    println!("{} of {} shuffled pairs have different labels:", batch.len(), labels.len());
    for (&(i, j), l) in batch.pairs.iter().zip(&batch.lambdas) {
        println!("  {i} (intent {}) x {j} (intent {}), lambda {l:.3}", labels[i], labels[j]);
    }

    let h = model.forward_layers(&model.embed_batch(&ids)?, 0, mix.n_mix)?;
    let mixed = interpolate(&h, &batch)?;
    let top = model.forward_layers(&mixed, mix.n_mix, cfg.num_layers)?;
    let z = model.intent_head(&open_intent::encoder::mean_pool(&top)?)?;
    let logits = model.classify(&z, 4)?;
    println!("open-class loss of the untrained model: {:.4}", mixup_loss(&logits)?);

    let hi = h.sample(0);
    let zi = model.represent(&[ids[0]])?;
    let z1 = mixup_forward(&model, &hi, &h.sample(4), 1.0, mix.n_mix)?;
    println!("lambda = 1 reproduces the first parent: {}", z1 == zi.row(0));

    println!("loss with a dominant open logit: {:.2e}", mixup_loss(&array![[0.0, 0.0, 20.0]])?);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

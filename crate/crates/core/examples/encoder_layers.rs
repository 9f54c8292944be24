// Runs the encoder layer by layer: the split forward pass used for mixup
// is exactly the full pass, and the K-way classifier is the first K rows
// of the (K+1)-way one.

use ndarray::s;
use open_intent::encoder::{mean_pool, EncoderConfig, EncoderModel};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = EncoderConfig::desk(40);
    let k = 4;
    let model = EncoderModel::new(cfg.clone(), k, 0)?;
    let batch: [&[u32]; 3] = [&[3, 4, 5, 6, 7], &[8, 9], &[10, 11, 12]];

    let h0 = model.embed_batch(&batch)?;
    println!("layer 0 states: {:?} (CLS prepended, padded)", h0.values.dim());

    let n = cfg.num_layers - 1;
    let mid = model.forward_layers(&h0, 0, n)?;
    let top = model.forward_layers(&mid, n, cfg.num_layers)?;
    let direct = model.forward_layers(&h0, 0, cfg.num_layers)?;
    println!("layers 0..{n} then {n}..{} equals 0..{}: {}", cfg.num_layers, cfg.num_layers, top == direct);

    let z = model.intent_head(&mean_pool(&top)?)?;
    println!("intent representations: {:?}, all >= 0: {}", z.dim(), z.iter().all(|&v| v >= 0.0));

    let open = model.classify(&z, k + 1)?;
    let known = model.classify(&z, k)?;
    println!("K-way logits are a prefix: {}", known == open.slice(s![.., ..k]));
    println!("first row of (K+1)-way logits: {:.4}", open.row(0));
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

// Softened targets and the KL-divergence loss.

use ndarray::array;
use open_intent::softlabel::{kl_loss, kl_loss_with_grad, soften};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let p = soften(2, 3, 0.3)?;
    println!("soften(gold=2, K=3, xi=0.3) = {}", p.probs);

    let one_hot = soften(1, 1, 0.0)?;
    let uniform = array![[0.0, 0.0]];
    println!("xi=0, uniform logits: KL = {:.6} (= ln 2)", kl_loss(&[one_hot], &uniform)?);

    let target = soften(1, 1, 0.3)?;
    println!("p=[0.7,0.3], q=[0.5,0.5]: KL = {:.5}", kl_loss(&[target.clone()], &uniform)?);

    let matching = array![[0.7f64.ln(), 0.3f64.ln()]];
    println!("logits matching p: KL = {:.2e}", kl_loss(&[target.clone()], &matching)?);

    let (_, grad) = kl_loss_with_grad(&[target], &uniform)?;
    println!("gradient softmax(q) - p = {grad}");
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

//! Per-label asymmetric loss next to plain BCE, showing how easy negatives
//! are down-weighted while positives keep their full loss.

use dishnet::loss::{batch_loss, per_label_loss, AsymmetricLossConfig};
use dishnet::Tensor;

fn main() -> dishnet::Result<()> {
    let asl = AsymmetricLossConfig::default();
    let bce = AsymmetricLossConfig::bce();
    println!("{:>6} {:>8} {:>12} {:>12}", "z", "target", "asl", "bce");
    for z in [-4.0, -1.0, 0.0, 1.0, 4.0] {
        for positive in [true, false] {
            let a = per_label_loss(z, positive, &asl)?;
            let b = per_label_loss(z, positive, &bce)?;
            println!("{z:>6.1} {:>8} {a:>12.6} {b:>12.6}", u8::from(positive));
        }
    }

    let logits = Tensor::<f64>::param(vec![2.0, -3.0, 0.5, -0.5], &[2, 2])?;
    let targets = Tensor::<f64>::new(vec![1.0, 0.0, 0.0, 1.0], &[2, 2])?;
    let loss = batch_loss(&logits, &targets, &asl)?;
    loss.backward()?;
    println!("batch loss {:.6}, dL/dz {:?}", loss.item()?, logits.grad().unwrap());
    Ok(())
}

//! Trains a tiny encoder with a GAP or ML-Decoder head on generated glyph
//! images and reports train/test mAP.
//!
//! cargo run --release --example train_synthetic -- [gap|mldecoder] [epochs]

use std::time::Instant;

use dishnet::config::{DataSource, TrainConfig};
use dishnet::data::{generate_synthetic, SyntheticSpec};
use dishnet::decoder::MlDecoderConfig;
use dishnet::model::DecoderSpec;
use dishnet::train::{evaluate_map, fit};

fn main() -> dishnet::Result<()> {
    let mut args = std::env::args().skip(1);
    let decoder = match args.next().as_deref() {
        Some("mldecoder") => DecoderSpec::MlDecoder(MlDecoderConfig { groups: Some(2), ..Default::default() }),
        _ => DecoderSpec::Gap,
    };
    let epochs = args.next().and_then(|e| e.parse().ok()).unwrap_or(50);

    let spec = SyntheticSpec::default();
    let cfg = TrainConfig {
        epochs,
        decoder,
        output: std::env::temp_dir().join("dishnet-example"),
        ..TrainConfig::with_data(DataSource::Synthetic(spec.clone()))
    };
    let data = generate_synthetic(&spec)?;
    let start = Instant::now();
    let run = fit::<f32>(&cfg, &data, |r, _| {
        println!(
            "epoch {:>3}  lr {:.2e}  loss {:.4}  test mAP {:.4}  ({:.1}s)",
            r.epoch,
            r.lr,
            r.train_loss,
            r.test_map.unwrap_or(f64::NAN),
            start.elapsed().as_secs_f64()
        );
        Ok(())
    })?;
    println!("train mAP {:.4}", evaluate_map(&run.model, &data.train, 64)?);
    println!("test mAP  {:.4}", evaluate_map(&run.model, &data.test, 64)?);
    Ok(())
}

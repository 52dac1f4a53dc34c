//! Trains a GAP head on precomputed feature maps stored as FMAP files,
//! the path used when features come from an encoder outside this crate.
//!
//! Each label owns one channel; a map carries signal on the channels of its
//! labels, plus noise everywhere.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dishnet::config::{DataSource, ScheduleSettings, TrainConfig};
use dishnet::data::{load_feature_dataset, AugmentConfig};
use dishnet::encoder::{write_external_features, FeatureMap};
use dishnet::model::EncoderSpec;
use dishnet::train::{evaluate_map, fit};
use dishnet::Tensor;

const LABELS: [&str; 4] = ["rice", "soup", "salad", "bread"];
const H: usize = 3;
const W: usize = 3;
const D: usize = 6;

fn write_split(dir: &std::path::Path, name: &str, n: usize, rng: &mut ChaCha8Rng) -> dishnet::Result<()> {
    let mut values = Vec::with_capacity(n * H * W * D);
    let mut lines = Vec::new();
    for _ in 0..n {
        let present: Vec<bool> = (0..LABELS.len()).map(|_| rng.random_bool(0.4)).collect();
        for _ in 0..H * W {
            for c in 0..D {
                let signal = if present.get(c).copied().unwrap_or(false) { 1.0 } else { 0.0 };
                values.push(signal + rng.random_range(-0.3..0.3f32));
            }
        }
        let names: Vec<&str> = LABELS.iter().zip(&present).filter(|(_, &p)| p).map(|(l, _)| *l).collect();
        lines.push(names.join(";"));
    }
    write_external_features(dir.join(format!("{name}.fmap")), &FeatureMap::new(Tensor::new(values, &[n, H, W, D])?)?)?;
    std::fs::write(dir.join(format!("{name}.txt")), lines.join("\n") + "\n")?;
    Ok(())
}

fn main() -> dishnet::Result<()> {
    let dir = std::env::temp_dir().join("dishnet-features");
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("vocab.txt"), LABELS.join("\n") + "\n")?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    write_split(&dir, "train", 128, &mut rng)?;
    write_split(&dir, "test", 32, &mut rng)?;

    let source = DataSource::Features {
        vocab: dir.join("vocab.txt"),
        train_features: dir.join("train.fmap"),
        train_labels: dir.join("train.txt"),
        test_features: dir.join("test.fmap"),
        test_labels: dir.join("test.txt"),
    };
    let data = load_feature_dataset(
        dir.join("vocab.txt"),
        dir.join("train.fmap"),
        dir.join("train.txt"),
        dir.join("test.fmap"),
        dir.join("test.txt"),
    )?;
    let cfg = TrainConfig {
        epochs: 20,
        // 4 batches per epoch; the default 200-iteration warmup would not fit.
        schedule: ScheduleSettings { peak_lr: 1e-2, warmup_iters: 8, ..Default::default() },
        encoder: EncoderSpec::External { height: H, width: W, depth: D },
        augment: AugmentConfig { enabled: false, ..Default::default() },
        output: dir.join("run"),
        ..TrainConfig::with_data(source)
    };
    cfg.validate()?;
    let run = fit::<f32>(&cfg, &data, |_, _| Ok(()))?;
    println!("params {}", run.model.param_count());
    println!("test mAP {:.4}", evaluate_map(&run.model, &data.test, 64)?);
    Ok(())
}

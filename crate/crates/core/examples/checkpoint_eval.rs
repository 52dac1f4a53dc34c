//! Trains briefly into a run directory, reloads the final checkpoint and
//! writes the JSON evaluation report.

use dishnet::checkpoint::Checkpoint;
use dishnet::config::{DataSource, ScheduleSettings, TrainConfig};
use dishnet::data::{generate_synthetic, SyntheticSpec};
use dishnet::report::evaluate;
use dishnet::train::train_to_dir;

fn main() -> dishnet::Result<()> {
    let dir = std::env::temp_dir().join("dishnet-ckpt");
    let spec = SyntheticSpec { num_train: 64, num_test: 32, ..Default::default() };
    let cfg = TrainConfig {
        epochs: 3,
        schedule: ScheduleSettings { warmup_iters: 2, ..Default::default() },
        output: dir.clone(),
        ..TrainConfig::with_data(DataSource::Synthetic(spec.clone()))
    };
    let data = generate_synthetic(&spec)?;
    let (run, files) = train_to_dir(&cfg, &data)?;
    for r in &run.log {
        println!("epoch {}  loss {:.4}", r.epoch, r.train_loss);
    }

    let ckpt = Checkpoint::<f32>::load(&files.final_checkpoint)?;
    println!("{} parameters, labels {:?}", ckpt.param_count(), ckpt.meta.labels);
    let report = evaluate(&ckpt, &data.test, 64)?;
    let json = serde_json::to_string_pretty(&report)?;
    std::fs::write(dir.join("report.json"), &json)?;
    println!("mAP {:.4}, {} multiply-adds per image", report.map, report.flops);
    println!("wrote {}", dir.join("report.json").display());
    Ok(())
}

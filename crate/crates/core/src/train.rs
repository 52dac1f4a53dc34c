//! Training loop, evaluation and the on-disk run layout.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::{optimizer_state_path, Checkpoint, CheckpointMeta};
use crate::config::TrainConfig;
use crate::data::{batch_iter, BatchOptions, Dataset, LabeledExample};
use crate::error::{Error, Result};
use crate::loss::batch_loss;
use crate::metrics::{mean_average_precision, Averaging, ThresholdGrid};
use crate::model::Model;
use crate::optim::{adam_step, learning_rate_at, AdamState};
use crate::tensor::{Element, Tensor};

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub iterations: usize,
    pub lr: f64,
    /// Mean of the batch losses over the epoch.
    pub train_loss: f64,
    /// Micro mAP on the test split, when there is one.
    pub test_map: Option<f64>,
}

/// Result of [`fit`].
#[derive(Clone, Debug)]
pub struct TrainRun<T: Element> {
    pub model: Model<T>,
    pub optimizer: AdamState<T>,
    pub log: Vec<EpochRecord>,
    /// Highest test mAP seen and the weights that achieved it.
    pub best: Option<(usize, f64, Model<T>)>,
}

/// Sigmoid scores `(N, K)` and targets `(N, K)` for `examples`, in order.
pub fn predict_scores<T: Element>(model: &Model<T>, examples: &[LabeledExample], batch_size: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let frozen = model.frozen();
    let (mut scores, mut targets) = (Vec::new(), Vec::new());
    for batch in batch_iter::<T>(examples, BatchOptions::eval(batch_size))? {
        let batch = batch?;
        scores.extend_from_slice(frozen.forward(&batch.images)?.sigmoid()?.data());
        targets.extend_from_slice(batch.targets.data());
    }
    let k = examples[0].target.len();
    Ok((Tensor::new(scores, &[examples.len(), k])?, Tensor::new(targets, &[examples.len(), k])?))
}

/// Micro mAP over the default 500-point grid.
pub fn evaluate_map<T: Element>(model: &Model<T>, examples: &[LabeledExample], batch_size: usize) -> Result<f64> {
    let (scores, targets) = predict_scores(model, examples, batch_size)?;
    mean_average_precision(&scores, &targets, &ThresholdGrid::default(), Averaging::Micro)
}

/// Trains a freshly initialized model on `data.train`. `on_epoch` sees every
/// log record as soon as it is produced.
pub fn fit<T: Element>(cfg: &TrainConfig, data: &Dataset, mut on_epoch: impl FnMut(&EpochRecord, &Model<T>) -> Result<()>) -> Result<TrainRun<T>> {
    let spec = cfg.model_spec(data.vocab.len())?;
    let mut model = Model::<T>::init(spec, cfg.seed)?;
    let mut optimizer = AdamState::new(model.params());
    let schedule = cfg.schedule(data.train.len());
    if cfg.epochs > 0 {
        schedule.validate()?;
    }
    let augment = cfg.augment.enabled.then_some(cfg.augment);
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, Model<T>)> = None;
    let mut it = 0;
    for epoch in 0..cfg.epochs {
        let opts = BatchOptions { batch_size: cfg.batch_size, seed: cfg.seed, epoch: epoch as u64, shuffle: true, augment };
        let (mut loss_sum, mut batches, mut lr) = (0.0, 0, 0.0);
        for batch in batch_iter::<T>(&data.train, opts)? {
            let batch = batch?;
            let loss = batch_loss(&model.forward(&batch.images)?, &batch.targets, &cfg.loss)?;
            let value = loss.item()?.to_f64_lossy();
            if !value.is_finite() {
                return Err(Error::Diverged { epoch: epoch + 1, iteration: it, loss: value });
            }
            loss.backward()?;
            lr = learning_rate_at(it, &schedule)?;
            let grads = model.params().grads();
            adam_step(model.params_mut(), &grads, &mut optimizer, lr)?;
            loss_sum += value;
            batches += 1;
            it += 1;
        }
        let test_map = if data.test.is_empty() { None } else { Some(evaluate_map(&model, &data.test, cfg.batch_size)?) };
        let record = EpochRecord { epoch: epoch + 1, iterations: it, lr, train_loss: loss_sum / batches as f64, test_map };
        if let Some(m) = test_map {
            if best.as_ref().is_none_or(|(_, b, _)| m > *b) {
                best = Some((epoch + 1, m, model.clone()));
            }
        }
        on_epoch(&record, &model)?;
        log.push(record);
    }
    Ok(TrainRun { model, optimizer, log, best })
}

/// Files written by [`train_to_dir`].
#[derive(Clone, Debug)]
pub struct RunFiles {
    pub log: PathBuf,
    pub final_checkpoint: PathBuf,
    pub best_checkpoint: PathBuf,
}

impl RunFiles {
    pub fn in_dir(dir: &Path) -> Self {
        RunFiles {
            log: dir.join("train_log.jsonl"),
            final_checkpoint: dir.join("final.ckpt"),
            best_checkpoint: dir.join("best.ckpt"),
        }
    }
}

fn checkpoint<T: Element>(cfg: &TrainConfig, data: &Dataset, model: &Model<T>, epoch: usize) -> Checkpoint<T> {
    Checkpoint {
        meta: CheckpointMeta {
            model: model.spec().clone(),
            labels: data.vocab.labels().to_vec(),
            epoch,
            config: cfg.to_json(),
        },
        model: model.clone(),
    }
}

/// Trains with `cfg` and writes the JSON-lines log, the final checkpoint (with
/// its optimizer state) and the best-test-mAP checkpoint into `cfg.output`.
/// Without a test split, or with zero epochs, the best checkpoint is the final one.
pub fn train_to_dir(cfg: &TrainConfig, data: &Dataset) -> Result<(TrainRun<f32>, RunFiles)> {
    std::fs::create_dir_all(&cfg.output)?;
    let files = RunFiles::in_dir(&cfg.output);
    let mut log = BufWriter::new(File::create(&files.log)?);
    let run = fit::<f32>(cfg, data, |record, _| {
        serde_json::to_writer(&mut log, record)?;
        writeln!(log)?;
        log.flush()?;
        Ok(())
    })?;
    let final_ckpt = checkpoint(cfg, data, &run.model, run.log.len());
    final_ckpt.save(&files.final_checkpoint)?;
    std::fs::write(optimizer_state_path(&files.final_checkpoint), run.optimizer.to_bytes()?)?;
    match &run.best {
        Some((epoch, _, model)) => checkpoint(cfg, data, model, *epoch).save(&files.best_checkpoint)?,
        None => final_ckpt.save(&files.best_checkpoint)?,
    }
    Ok((run, files))
}

//! TOML run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic, load_feature_dataset, load_manifest, AugmentConfig, Dataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::loss::AsymmetricLossConfig;
use crate::model::{DecoderSpec, EncoderSpec, ModelSpec};
use crate::optim::ScheduleConfig;

/// Learning-rate schedule without the iteration count, which follows from
/// the dataset size, batch size and epochs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSettings {
    pub peak_lr: f64,
    pub final_lr: f64,
    pub warmup_iters: usize,
}

impl Default for ScheduleSettings {
    fn default() -> Self {
        let s = ScheduleConfig::new(0);
        ScheduleSettings { peak_lr: s.peak_lr, final_lr: s.final_lr, warmup_iters: s.warmup_iters }
    }
}

impl ScheduleSettings {
    pub fn with_total(&self, total_iters: usize) -> ScheduleConfig {
        ScheduleConfig { peak_lr: self.peak_lr, final_lr: self.final_lr, warmup_iters: self.warmup_iters, total_iters }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    /// `path,split,labels` CSV plus a one-label-per-line vocabulary.
    Manifest { manifest: PathBuf, vocab: PathBuf },
    /// Precomputed feature maps, for the external encoder.
    Features {
        vocab: PathBuf,
        train_features: PathBuf,
        train_labels: PathBuf,
        test_features: PathBuf,
        test_labels: PathBuf,
    },
}

fn default_batch_size() -> usize {
    32
}

fn default_epochs() -> usize {
    50
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Directory receiving checkpoints and the training log.
    pub output: PathBuf,
    #[serde(default)]
    pub encoder: EncoderSpec,
    #[serde(default)]
    pub decoder: DecoderSpec,
    #[serde(default)]
    pub schedule: ScheduleSettings,
    #[serde(default)]
    pub loss: AsymmetricLossConfig,
    #[serde(default)]
    pub augment: AugmentConfig,
    pub data: DataSource,
}

impl TrainConfig {
    /// Defaults for everything except the data source; output goes to `run/`.
    pub fn with_data(data: DataSource) -> Self {
        TrainConfig {
            seed: 0,
            batch_size: default_batch_size(),
            epochs: default_epochs(),
            output: PathBuf::from("run"),
            encoder: EncoderSpec::default(),
            decoder: DecoderSpec::default(),
            schedule: ScheduleSettings::default(),
            loss: AsymmetricLossConfig::default(),
            augment: AugmentConfig::default(),
            data,
        }
    }

    /// Parses a TOML document; relative paths are taken relative to `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: TrainConfig = toml::from_str(text)?;
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&std::fs::read_to_string(path)?, path.parent().unwrap_or(Path::new(".")))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output);
        match &mut self.data {
            DataSource::Synthetic(_) => {}
            DataSource::Manifest { manifest, vocab } => {
                fix(manifest);
                fix(vocab);
            }
            DataSource::Features { vocab, train_features, train_labels, test_features, test_labels } => {
                for p in [vocab, train_features, train_labels, test_features, test_labels] {
                    fix(p);
                }
            }
        }
    }

    /// Checks that need no data. Label-count dependent checks happen in
    /// [`TrainConfig::model_spec`].
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        self.loss.validate()?;
        match (&self.encoder, &self.data) {
            (EncoderSpec::Tiny(enc), DataSource::Synthetic(spec)) => {
                enc.validate()?;
                spec.validate()?;
                if (spec.canvas.0, spec.canvas.1, 3) != enc.input_size {
                    return bad(format!("synthetic canvas {:?} does not match encoder input {:?}", spec.canvas, enc.input_size));
                }
            }
            (EncoderSpec::Tiny(enc), DataSource::Manifest { .. }) => {
                enc.validate()?;
                if enc.input_size.2 != 3 {
                    return bad("image data has 3 channels".into());
                }
            }
            (EncoderSpec::External { .. }, DataSource::Features { .. }) => {
                if self.augment.enabled {
                    return bad("augmentation applies to images only; set augment.enabled = false".into());
                }
            }
            _ => return bad("the external encoder needs a features data source and vice versa".into()),
        }
        Ok(())
    }

    pub fn load_data(&self) -> Result<Dataset> {
        let ds = match &self.data {
            DataSource::Synthetic(spec) => generate_synthetic(spec)?,
            DataSource::Manifest { manifest, vocab } => {
                let size = match &self.encoder {
                    EncoderSpec::Tiny(enc) => Some((enc.input_size.0, enc.input_size.1)),
                    EncoderSpec::External { .. } => None,
                };
                load_manifest(manifest, vocab, size)?
            }
            DataSource::Features { vocab, train_features, train_labels, test_features, test_labels } => {
                load_feature_dataset(vocab, train_features, train_labels, test_features, test_labels)?
            }
        };
        if ds.train.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(ds)
    }

    pub fn model_spec(&self, num_labels: usize) -> Result<ModelSpec> {
        let spec = ModelSpec { encoder: self.encoder.clone(), decoder: self.decoder.clone(), num_labels };
        spec.validate()?;
        Ok(spec)
    }

    pub fn schedule(&self, num_train: usize) -> ScheduleConfig {
        self.schedule.with_total(num_train.div_ceil(self.batch_size) * self.epochs)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
output = "run"
[data]
source = "synthetic"
canvas = [64, 64]
num_labels = 8
objects_per_image = [1, 4]
num_train = 16
num_test = 4
seed = 3
"#;

    #[test]
    fn defaults_and_paths() {
        let cfg = TrainConfig::parse(MINIMAL, Path::new("/tmp/x")).unwrap();
        assert_eq!((cfg.batch_size, cfg.epochs), (32, 50));
        assert_eq!(cfg.output, Path::new("/tmp/x/run"));
        assert_eq!(cfg.decoder, DecoderSpec::Gap);
        assert_eq!(cfg.loss.gamma_minus, 5.0);
        assert_eq!(cfg.schedule(256).total_iters, 400);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = format!("bogus = 1\n{MINIMAL}");
        assert!(matches!(TrainConfig::parse(&text, Path::new(".")), Err(Error::Toml(_))));
    }

    #[test]
    fn decoder_table() {
        let text = MINIMAL.replace("[data]", "[decoder]\nkind = \"mldecoder\"\ngroups = 9\n[data]");
        let cfg = TrainConfig::parse(&text, Path::new(".")).unwrap();
        assert!(matches!(cfg.model_spec(8), Err(Error::GroupOverflow { groups: 9, labels: 8 })));
    }

    #[test]
    fn encoder_table() {
        let text = MINIMAL.replace(
            "[data]",
            "[encoder]\nkind = \"tiny\"\nkernel_size = 3\ninput_size = [32, 32, 3]\nstages = [{ out_channels = 4, stride = 2 }]\n[data]",
        );
        assert!(matches!(TrainConfig::parse(&text, Path::new(".")), Err(Error::InvalidSpec(_))));
    }
}

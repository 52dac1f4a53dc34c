//! Datasets, augmentation and batching.

mod augment;
mod batch;
mod features;
mod image_io;
mod manifest;
mod synthetic;
mod vocab;

pub use augment::{apply as apply_augmentation, augment, AugmentConfig, AugmentParams};
pub use batch::{batch_iter, Batch, BatchIter, BatchOptions};
pub use features::load_feature_dataset;
pub use image_io::{load_image, resize_bilinear, save_png};
pub use manifest::{load_manifest, load_manifest_with_vocab, write_manifest, Split};
pub use synthetic::{generate_synthetic, Glyph, GlyphShape, SyntheticSpec};
pub use vocab::LabelVocabulary;

use crate::tensor::Tensor;

/// One input with its multi-hot target.
#[derive(Clone, Debug)]
pub struct LabeledExample {
    /// `(H, W, C)`; images have 3 channels with values in `[0, 1]`.
    pub image: Tensor<f32>,
    pub target: Vec<bool>,
    pub source_id: String,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub train: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
    pub vocab: LabelVocabulary,
}

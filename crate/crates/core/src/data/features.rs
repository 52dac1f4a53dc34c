use std::path::Path;

use super::{Dataset, LabelVocabulary, LabeledExample};
use crate::encoder::load_external_features;
use crate::error::{Error, Result};

fn split(features: &Path, labels: &Path, vocab: &LabelVocabulary, tag: &str) -> Result<Vec<LabeledExample>> {
    let fm = load_external_features(features)?;
    let lines: Vec<String> = std::fs::read_to_string(labels)?.lines().map(str::to_string).collect();
    if lines.len() != fm.batch() {
        return Err(Error::Malformed(format!(
            "{} has {} label lines for {} feature maps",
            labels.display(),
            lines.len(),
            fm.batch()
        )));
    }
    lines
        .iter()
        .enumerate()
        .map(|(i, line)| {
            Ok(LabeledExample {
                image: fm.slice_batch(i, 1)?.values().reshape(&[fm.height(), fm.width(), fm.depth()])?,
                target: vocab.encode_list(line)?,
                source_id: format!("{tag}:{i}"),
            })
        })
        .collect()
}

/// Precomputed feature maps with one `;`-separated label line per map.
pub fn load_feature_dataset(
    vocab: impl AsRef<Path>,
    train_features: impl AsRef<Path>,
    train_labels: impl AsRef<Path>,
    test_features: impl AsRef<Path>,
    test_labels: impl AsRef<Path>,
) -> Result<Dataset> {
    let vocab = LabelVocabulary::load(vocab)?;
    let train = split(train_features.as_ref(), train_labels.as_ref(), &vocab, "train")?;
    let test = split(test_features.as_ref(), test_labels.as_ref(), &vocab, "test")?;
    Ok(Dataset { train, test, vocab })
}

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::image_io::{load_image, save_png};
use super::{Dataset, LabelVocabulary, LabeledExample};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Deserialize, Serialize)]
struct Row {
    path: String,
    split: Split,
    labels: String,
}

/// Reads a `path,split,labels` CSV whose image paths are relative to the
/// manifest's directory. Images are resized to `size` when given.
pub fn load_manifest(
    manifest: impl AsRef<Path>,
    vocab_path: impl AsRef<Path>,
    size: Option<(usize, usize)>,
) -> Result<Dataset> {
    load_manifest_with_vocab(manifest, LabelVocabulary::load(vocab_path)?, size)
}

/// [`load_manifest`] with an already known vocabulary.
pub fn load_manifest_with_vocab(
    manifest: impl AsRef<Path>,
    vocab: LabelVocabulary,
    size: Option<(usize, usize)>,
) -> Result<Dataset> {
    let manifest = manifest.as_ref();
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut reader = csv::Reader::from_path(manifest)?;
    let mut seen: HashMap<String, Split> = HashMap::new();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for row in reader.deserialize() {
        let row: Row = row?;
        match seen.insert(row.path.clone(), row.split) {
            Some(prev) if prev != row.split => return Err(Error::DuplicateAcrossSplits(row.path)),
            Some(_) => return Err(Error::Malformed(format!("`{}` listed twice", row.path))),
            None => {}
        }
        let target = vocab.encode_list(&row.labels)?;
        let image = load_image(base.join(&row.path), size)?;
        let ex = LabeledExample { image, target, source_id: row.path };
        match row.split {
            Split::Train => train.push(ex),
            Split::Test => test.push(ex),
        }
    }
    Ok(Dataset { train, test, vocab })
}

/// Writes every example as a PNG named by its source id, plus `manifest.csv` and
/// `vocab.txt` into `dir`.
pub fn write_manifest(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("vocab.txt"), dataset.vocab.to_text())?;
    let mut w = csv::Writer::from_path(dir.join("manifest.csv"))?;
    for (split, examples) in [(Split::Train, &dataset.train), (Split::Test, &dataset.test)] {
        for ex in examples {
            save_png(dir.join(&ex.source_id), &ex.image)?;
            let labels = dataset.vocab.decode(&ex.target).join(";");
            w.serialize(Row { path: ex.source_id.clone(), split, labels })?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn fixture(rows: &str) -> (tempfile::TempDir, Result<Dataset>) {
        let dir = tempfile::tempdir().unwrap();
        let img = Tensor::new(vec![0.5f32; 4 * 4 * 3], &[4, 4, 3]).unwrap();
        for name in ["img_001.png", "img_002.png"] {
            save_png(dir.path().join(name), &img).unwrap();
        }
        std::fs::write(dir.path().join("vocab.txt"), "beef\nrice\negg\n").unwrap();
        std::fs::write(dir.path().join("m.csv"), format!("path,split,labels\n{rows}")).unwrap();
        let ds = load_manifest(dir.path().join("m.csv"), dir.path().join("vocab.txt"), Some((2, 2)));
        (dir, ds)
    }

    #[test]
    fn loads_rows() {
        let (_d, ds) = fixture("img_001.png,train,\"beef;rice\"\nimg_002.png,test,egg\n");
        let ds = ds.unwrap();
        assert_eq!(ds.train[0].target, vec![true, true, false]);
        assert_eq!(ds.train[0].image.shape(), &[2, 2, 3]);
        assert_eq!(ds.test[0].target, vec![false, false, true]);
    }

    #[test]
    fn error_cases() {
        assert!(matches!(fixture("img_001.png,train,tofu\n").1, Err(Error::UnknownLabel(_))));
        assert!(matches!(fixture("img_003.png,train,egg\n").1, Err(Error::MissingImage(_))));
        assert!(matches!(
            fixture("img_001.png,train,egg\nimg_001.png,test,egg\n").1,
            Err(Error::DuplicateAcrossSplits(p)) if p == "img_001.png"
        ));
        assert!(matches!(fixture("img_001.png,val,egg\n").1, Err(Error::Csv(_))));
    }
}

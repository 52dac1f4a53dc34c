//! Checkpoint archive: `DNCK`, u32 version, u32 metadata length, JSON
//! metadata, u32 tensor count, then per tensor a u32-length-prefixed UTF-8
//! name followed by its `TNSR` record.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::{put_u32, to_u32, ByteReader};
use crate::data::LabelVocabulary;
use crate::error::{Error, Result};
use crate::model::{Model, ModelSpec};
use crate::params::ParamStore;
use crate::tensor::serialize::read_tensor_from;
use crate::tensor::{write_tensor, Element};

const MAGIC: &[u8; 4] = b"DNCK";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelSpec,
    pub labels: Vec<String>,
    /// Completed training epochs.
    pub epoch: usize,
    /// Echo of the configuration that produced the weights.
    pub config: serde_json::Value,
}

#[derive(Clone, Debug)]
pub struct Checkpoint<T: Element> {
    pub meta: CheckpointMeta,
    pub model: Model<T>,
}

impl<T: Element> Checkpoint<T> {
    pub fn vocabulary(&self) -> Result<LabelVocabulary> {
        LabelVocabulary::new(self.meta.labels.iter().cloned())
    }

    /// Sum of all stored tensor sizes.
    pub fn param_count(&self) -> usize {
        self.model.param_count()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_vec(&self.meta)?;
        let params = self.model.params();
        let mut out = MAGIC.to_vec();
        put_u32(&mut out, VERSION);
        put_u32(&mut out, to_u32(meta.len())?);
        out.extend_from_slice(&meta);
        put_u32(&mut out, to_u32(params.len())?);
        for (name, t) in params.iter() {
            put_u32(&mut out, to_u32(name.len())?);
            out.extend_from_slice(name.as_bytes());
            write_tensor(&mut out, t)?;
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.magic(MAGIC)?;
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Malformed(format!("unsupported checkpoint version {version}")));
        }
        let meta_len = r.u32()? as usize;
        let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len)?)?;
        let mut params = ParamStore::new();
        for _ in 0..r.u32()? {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?).map_err(|e| Error::Malformed(e.to_string()))?.to_string();
            let t = read_tensor_from(&mut r)?.into_precision::<T>();
            params.insert(name, t.to_vec(), t.shape())?;
        }
        if r.remaining() != 0 {
            return Err(Error::Malformed(format!("{} trailing bytes after checkpoint", r.remaining())));
        }
        if meta.labels.len() != meta.model.num_labels {
            return Err(Error::shape("checkpoint", format!("{} labels for a {}-label model", meta.labels.len(), meta.model.num_labels)));
        }
        let model = Model::from_parts(meta.model.clone(), params)?;
        Ok(Checkpoint { meta, model })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Where the optimizer state of checkpoint `path` lives.
pub fn optimizer_state_path(path: impl AsRef<Path>) -> PathBuf {
    let mut p = path.as_ref().as_os_str().to_owned();
    p.push(".adam");
    PathBuf::from(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DecoderSpec, EncoderSpec};

    fn ckpt() -> Checkpoint<f32> {
        let spec = ModelSpec { encoder: EncoderSpec::External { height: 2, width: 2, depth: 4 }, decoder: DecoderSpec::Gap, num_labels: 3 };
        Checkpoint {
            meta: CheckpointMeta {
                model: spec.clone(),
                labels: vec!["a".into(), "b".into(), "c".into()],
                epoch: 2,
                config: serde_json::json!({"seed": 1}),
            },
            model: Model::init(spec, 5).unwrap(),
        }
    }

    #[test]
    fn roundtrip_is_bitwise() {
        let c = ckpt();
        let bytes = c.to_bytes().unwrap();
        let back = Checkpoint::<f32>::from_bytes(&bytes).unwrap();
        assert_eq!(back.meta, c.meta);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert_eq!(back.param_count(), 4 * 3 + 3);
    }

    #[test]
    fn corrupt_inputs() {
        let bytes = ckpt().to_bytes().unwrap();
        assert!(matches!(Checkpoint::<f32>::from_bytes(&bytes[..bytes.len() - 1]), Err(Error::TruncatedFile { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::<f32>::from_bytes(&bad), Err(Error::BadMagic { .. })));
    }
}

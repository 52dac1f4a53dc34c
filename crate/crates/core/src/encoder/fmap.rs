//! `FMAP` external feature files: magic, u32 batch/H/W/D, then f32 values in
//! `(batch, H, W, D)` row-major order, all little-endian.

use std::fs;
use std::path::Path;

use super::FeatureMap;
use crate::codec::{put_u32, ByteReader};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"FMAP";
const MAX_DIM: u32 = 1 << 16;

pub fn write_external_features(path: impl AsRef<Path>, features: &FeatureMap<f32>) -> Result<()> {
    let shape = features.values().shape();
    let mut out = Vec::with_capacity(20 + features.values().numel() * 4);
    out.extend_from_slice(MAGIC);
    for &d in shape {
        if d as u64 > MAX_DIM as u64 {
            return Err(Error::DimOverflow(d as u64));
        }
        put_u32(&mut out, d as u32);
    }
    for v in features.values().data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

/// Parses an in-memory `FMAP` buffer into a gradient-free feature map.
pub fn read_external_features(bytes: &[u8]) -> Result<FeatureMap<f32>> {
    let mut r = ByteReader::new(bytes);
    r.magic(MAGIC)?;
    let mut dims = [0usize; 4];
    for d in &mut dims {
        let v = r.u32()?;
        if v == 0 || v > MAX_DIM {
            return Err(Error::DimOverflow(v.into()));
        }
        *d = v as usize;
    }
    let n = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).ok_or(Error::DimOverflow(u64::MAX))?;
    let expected = n.checked_mul(4).and_then(|b| b.checked_add(20)).ok_or(Error::DimOverflow(u64::MAX))?;
    if bytes.len() < expected {
        return Err(Error::TruncatedFile { expected, found: bytes.len() });
    }
    let data = r.take(n * 4)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    FeatureMap::new(Tensor::new(data, &dims)?)
}

pub fn load_external_features(path: impl AsRef<Path>) -> Result<FeatureMap<f32>> {
    read_external_features(&fs::read(path)?)
}

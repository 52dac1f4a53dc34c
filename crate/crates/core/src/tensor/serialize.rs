//! `TNSR` binary record: magic, u8 bytes-per-element, u32 rank, u32 dims,
//! then the row-major little-endian payload.

use super::{Element, Tensor};
use crate::codec::{put_u32, to_u32, ByteReader};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"TNSR";

/// A decoded tensor of either precision.
#[derive(Clone, Debug)]
pub enum AnyTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl AnyTensor {
    pub fn shape(&self) -> &[usize] {
        match self {
            AnyTensor::F32(t) => t.shape(),
            AnyTensor::F64(t) => t.shape(),
        }
    }

    pub fn precision_bytes(&self) -> u8 {
        match self {
            AnyTensor::F32(_) => 4,
            AnyTensor::F64(_) => 8,
        }
    }

    /// The tensor in precision `T`, converting if needed.
    pub fn into_precision<T: Element>(self) -> Tensor<T> {
        match self {
            AnyTensor::F32(t) => t.cast(),
            AnyTensor::F64(t) => t.cast(),
        }
    }
}

/// Appends the `TNSR` record of `t` to `out`.
pub fn write_tensor<T: Element>(out: &mut Vec<u8>, t: &Tensor<T>) -> Result<()> {
    out.extend_from_slice(MAGIC);
    out.push(T::BYTES);
    put_u32(out, to_u32(t.rank())?);
    for &d in t.shape() {
        put_u32(out, to_u32(d)?);
    }
    out.reserve(t.numel() * T::BYTES as usize);
    for &v in t.data() {
        v.write_le(out);
    }
    Ok(())
}

fn read_payload<T: Element>(r: &mut ByteReader<'_>, shape: &[usize]) -> Result<Tensor<T>> {
    let n: usize = shape.iter().product();
    let bytes = r.take(n * T::BYTES as usize)?;
    let data = bytes.chunks_exact(T::BYTES as usize).map(T::read_le).collect();
    Tensor::new(data, shape)
}

/// Reads one `TNSR` record from the front of `bytes`, returning the tensor
/// and the number of bytes consumed.
pub fn read_tensor(bytes: &[u8]) -> Result<(AnyTensor, usize)> {
    let mut r = ByteReader::new(bytes);
    let t = read_tensor_from(&mut r)?;
    Ok((t, r.position()))
}

pub(crate) fn read_tensor_from(r: &mut ByteReader<'_>) -> Result<AnyTensor> {
    r.magic(MAGIC)?;
    let tag = r.u8()?;
    let rank = r.u32()? as usize;
    let mut shape = Vec::with_capacity(rank.min(16));
    let mut total: u64 = 1;
    for _ in 0..rank {
        let d = r.u32()?;
        if d == 0 {
            return Err(Error::DimOverflow(0));
        }
        total = total.saturating_mul(u64::from(d));
        shape.push(d as usize);
    }
    // Cheap guard before allocating: the payload must fit in what is left.
    let need = total.saturating_mul(u64::from(tag));
    if need > r.remaining() as u64 {
        return Err(Error::TruncatedFile {
            expected: r.position().saturating_add(need.min(usize::MAX as u64) as usize),
            found: r.position() + r.remaining(),
        });
    }
    match tag {
        4 => Ok(AnyTensor::F32(read_payload(r, &shape)?)),
        8 => Ok(AnyTensor::F64(read_payload(r, &shape)?)),
        other => Err(Error::BadPrecision(other)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_bit_exact() {
        let t = Tensor::<f32>::new(vec![1.0, -2.0], &[2, 1]).unwrap();
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        let mut want = b"TNSR".to_vec();
        want.push(4);
        want.extend(2u32.to_le_bytes());
        want.extend(2u32.to_le_bytes());
        want.extend(1u32.to_le_bytes());
        want.extend(1.0f32.to_le_bytes());
        want.extend((-2.0f32).to_le_bytes());
        assert_eq!(buf, want);
    }

    #[test]
    fn roundtrip_both_precisions() {
        let t = Tensor::<f64>::new(vec![0.1, 0.2, 0.3], &[3]).unwrap();
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        let (back, used) = read_tensor(&buf).unwrap();
        assert_eq!(used, buf.len());
        let AnyTensor::F64(back) = back else { panic!("wrong precision") };
        assert_eq!(back.data(), t.data());

        let s = Tensor::<f32>::scalar(2.5);
        buf.clear();
        write_tensor(&mut buf, &s).unwrap();
        let (back, _) = read_tensor(&buf).unwrap();
        assert_eq!(back.shape(), &[] as &[usize]);
    }

    #[test]
    fn rejects_bad_input() {
        let t = Tensor::<f32>::new(vec![1.0; 4], &[4]).unwrap();
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        assert!(matches!(read_tensor(&buf[..buf.len() - 1]), Err(Error::TruncatedFile { .. })));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_tensor(&bad), Err(Error::BadMagic { .. })));
        let mut bad = buf.clone();
        bad[4] = 3;
        assert!(matches!(read_tensor(&bad), Err(Error::BadPrecision(3))));
    }
}

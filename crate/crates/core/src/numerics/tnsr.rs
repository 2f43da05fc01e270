//! The `TNSR` binary tensor encoding.
//!
//! Layout, with no padding or alignment:
//!
//! ```text
//! magic    4 bytes  "TNSR"
//! version  u8       1
//! dtype    u8       1 = f32, 2 = u8
//! rank     u8
//! extents  rank × u32 little-endian
//! payload  row-major elements, little-endian
//! ```

use alloc::vec::Vec;

use super::Tensor;

pub const MAGIC: [u8; 4] = *b"TNSR";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum DType {
    F32 = 1,
    U8 = 2,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::U8 => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FormatError {
    #[error("bad magic {0:?}, expected \"TNSR\"")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),
    #[error("unsupported dtype code {0}")]
    UnsupportedDType(u8),
    #[error("truncated: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("invalid shape: {0}")]
    Shape(#[from] super::ShapeError),
    #[error("expected dtype {expected:?}, found {found:?}")]
    DTypeMismatch { expected: DType, found: DType },
}

/// Element types that have a `TNSR` dtype code.
pub trait Element: Copy + Sized {
    const DTYPE: DType;
    fn put(self, out: &mut Vec<u8>);
    fn take(bytes: &[u8]) -> Self;
}

impl Element for f32 {
    const DTYPE: DType = DType::F32;
    fn put(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn take(bytes: &[u8]) -> Self {
        f32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]])
    }
}

impl Element for u8 {
    const DTYPE: DType = DType::U8;
    fn put(self, out: &mut Vec<u8>) {
        out.push(self);
    }
    fn take(bytes: &[u8]) -> Self {
        bytes[0]
    }
}

/// A decoded tensor of either supported dtype.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyTensor {
    F32(Tensor<f32>),
    U8(Tensor<u8>),
}

impl AnyTensor {
    pub fn dims(&self) -> &[usize] {
        match self {
            AnyTensor::F32(t) => t.dims(),
            AnyTensor::U8(t) => t.dims(),
        }
    }

    pub fn dtype(&self) -> DType {
        match self {
            AnyTensor::F32(_) => DType::F32,
            AnyTensor::U8(_) => DType::U8,
        }
    }
}

pub fn header_len(rank: usize) -> usize {
    4 + 1 + 1 + 1 + 4 * rank
}

pub fn encode<T: Element>(t: &Tensor<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(header_len(t.rank()) + t.len() * T::DTYPE.size());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(T::DTYPE as u8);
    out.push(u8::try_from(t.rank()).expect("rank fits in u8"));
    for &d in t.dims() {
        out.extend_from_slice(&u32::try_from(d).expect("extent fits in u32").to_le_bytes());
    }
    for &v in t.data() {
        v.put(&mut out);
    }
    out
}

fn need(bytes: &[u8], needed: usize) -> Result<(), FormatError> {
    if bytes.len() < needed {
        Err(FormatError::Truncated {
            needed,
            available: bytes.len(),
        })
    } else {
        Ok(())
    }
}

fn decode_payload<T: Element>(dims: &[usize], payload: &[u8]) -> Result<Tensor<T>, FormatError> {
    let data = payload.chunks_exact(T::DTYPE.size()).map(T::take).collect();
    Ok(Tensor::from_vec(dims, data)?)
}

pub fn decode(bytes: &[u8]) -> Result<AnyTensor, FormatError> {
    need(bytes, 7)?;
    let magic = [bytes[0], bytes[1], bytes[2], bytes[3]];
    if magic != MAGIC {
        return Err(FormatError::BadMagic(magic));
    }
    if bytes[4] != VERSION {
        return Err(FormatError::UnsupportedVersion(bytes[4]));
    }
    let dtype = match bytes[5] {
        1 => DType::F32,
        2 => DType::U8,
        other => return Err(FormatError::UnsupportedDType(other)),
    };
    let rank = bytes[6] as usize;
    let header = header_len(rank);
    need(bytes, header)?;
    let dims: Vec<usize> = bytes[7..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or(FormatError::Truncated {
            needed: usize::MAX,
            available: bytes.len(),
        })?;
    let total = count
        .checked_mul(dtype.size())
        .and_then(|p| p.checked_add(header))
        .ok_or(FormatError::Truncated {
            needed: usize::MAX,
            available: bytes.len(),
        })?;
    need(bytes, total)?;
    if bytes.len() > total {
        return Err(FormatError::TrailingBytes(bytes.len() - total));
    }
    let payload = &bytes[header..total];
    Ok(match dtype {
        DType::F32 => AnyTensor::F32(decode_payload(&dims, payload)?),
        DType::U8 => AnyTensor::U8(decode_payload(&dims, payload)?),
    })
}

pub fn decode_f32(bytes: &[u8]) -> Result<Tensor<f32>, FormatError> {
    match decode(bytes)? {
        AnyTensor::F32(t) => Ok(t),
        other => Err(FormatError::DTypeMismatch {
            expected: DType::F32,
            found: other.dtype(),
        }),
    }
}

pub fn decode_u8(bytes: &[u8]) -> Result<Tensor<u8>, FormatError> {
    match decode(bytes)? {
        AnyTensor::U8(t) => Ok(t),
        other => Err(FormatError::DTypeMismatch {
            expected: DType::U8,
            found: other.dtype(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn zero_one_by_one_is_header_plus_four_zero_bytes() {
        let bytes = encode(&Tensor::<f32>::zeros(&[1, 1]));
        // 4 magic + version + dtype + rank + 2 extents of 4 bytes
        assert_eq!(header_len(2), 15);
        assert_eq!(bytes.len(), 15 + 4);
        assert_eq!(&bytes[..7], b"TNSR\x01\x01\x02");
        assert_eq!(&bytes[7..15], &[1, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(&bytes[15..], &[0, 0, 0, 0]);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode(&Tensor::<u8>::full(&[2], 7));
        bytes[..4].copy_from_slice(b"XXXX");
        assert_eq!(decode(&bytes), Err(FormatError::BadMagic(*b"XXXX")));
    }

    #[test]
    fn truncated_and_trailing() {
        let bytes = encode(&Tensor::<f32>::full(&[2, 3], 1.5));
        assert!(matches!(
            decode(&bytes[..bytes.len() - 1]),
            Err(FormatError::Truncated { .. })
        ));
        assert!(matches!(decode(&bytes[..5]), Err(FormatError::Truncated { .. })));
        let mut longer = bytes.clone();
        longer.push(0);
        assert_eq!(decode(&longer), Err(FormatError::TrailingBytes(1)));
    }

    #[test]
    fn unsupported_dtype_and_version() {
        let mut bytes = encode(&Tensor::<u8>::full(&[1], 0));
        bytes[5] = 3;
        assert_eq!(decode(&bytes), Err(FormatError::UnsupportedDType(3)));
        bytes[5] = 2;
        bytes[4] = 2;
        assert_eq!(decode(&bytes), Err(FormatError::UnsupportedVersion(2)));
    }

    #[test]
    fn zero_extent_rejected() {
        let mut bytes = encode(&Tensor::<u8>::full(&[1], 0));
        bytes[7] = 0;
        bytes.pop();
        assert!(matches!(decode(&bytes), Err(FormatError::Shape(_))));
    }

    #[test]
    fn dtype_mismatch() {
        let bytes = encode(&Tensor::<u8>::full(&[3], 9));
        assert!(matches!(
            decode_f32(&bytes),
            Err(FormatError::DTypeMismatch { .. })
        ));
        assert_eq!(decode_u8(&bytes).unwrap().data(), &vec![9u8; 3][..]);
    }
}

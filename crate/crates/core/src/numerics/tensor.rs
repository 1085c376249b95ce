use crate::error::{format_err, invalid, shape_err, Result};

use super::bf16::{bf16_bits_to_f32, f32_to_bf16_bits};

/// Maximum tensor rank.
pub const MAX_RANK: usize = 4;

/// Element type of a [`Tensor`]. The discriminant is the on-disk dtype byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum DType {
    F32 = 0,
    BF16 = 1,
    I32 = 2,
    I16 = 3,
    U8 = 4,
    U4Packed = 5,
}

impl DType {
    pub fn from_byte(b: u8) -> Result<Self> {
        Ok(match b {
            0 => DType::F32,
            1 => DType::BF16,
            2 => DType::I32,
            3 => DType::I16,
            4 => DType::U8,
            5 => DType::U4Packed,
            other => return Err(format_err!("unknown dtype byte {other}")),
        })
    }

    /// Payload size in bytes for `numel` elements.
    pub fn payload_len(self, numel: usize) -> usize {
        match self {
            DType::F32 | DType::I32 => numel * 4,
            DType::BF16 | DType::I16 => numel * 2,
            DType::U8 => numel,
            DType::U4Packed => numel.div_ceil(2),
        }
    }
}

/// Typed storage. `BF16` holds raw bf16 bits; `U4Packed` holds two elements
/// per byte, even index in the low nibble.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    BF16(Vec<u16>),
    I32(Vec<i32>),
    I16(Vec<i16>),
    U8(Vec<u8>),
    U4Packed(Vec<u8>),
}

/// A dense row-major array of rank 1 to 4.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: TensorData,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > MAX_RANK {
        return Err(invalid!("tensor rank must be in 1..={MAX_RANK}, got {}", shape.len()));
    }
    if shape.contains(&0) {
        return Err(invalid!("tensor dims must be positive, got {shape:?}"));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| invalid!("tensor shape {shape:?} overflows"))
}

/// Packs 4-bit values (each < 16) two per byte.
pub fn pack_u4(values: &[u8]) -> Result<Vec<u8>> {
    let mut out = vec![0u8; values.len().div_ceil(2)];
    for (i, &v) in values.iter().enumerate() {
        if v > 15 {
            return Err(invalid!("value {v} at {i} does not fit 4 bits"));
        }
        out[i / 2] |= v << ((i % 2) * 4);
    }
    Ok(out)
}

/// Inverse of [`pack_u4`] for the first `numel` nibbles.
pub fn unpack_u4(packed: &[u8], numel: usize) -> Vec<u8> {
    (0..numel).map(|i| (packed[i / 2] >> ((i % 2) * 4)) & 0x0F).collect()
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Self> {
        let numel = check_shape(&shape)?;
        let len = match &data {
            TensorData::F32(v) => v.len(),
            TensorData::BF16(v) => v.len(),
            TensorData::I32(v) => v.len(),
            TensorData::I16(v) => v.len(),
            TensorData::U8(v) => v.len(),
            TensorData::U4Packed(v) => {
                if v.len() != numel.div_ceil(2) {
                    return Err(shape_err!(
                        "u4 payload has {} bytes, shape {shape:?} needs {}",
                        v.len(),
                        numel.div_ceil(2)
                    ));
                }
                if numel % 2 == 1 && v[v.len() - 1] & 0xF0 != 0 {
                    return Err(format_err!("u4 padding nibble is not zero"));
                }
                numel
            }
        };
        if len != numel {
            return Err(shape_err!("payload has {len} elements, shape {shape:?} needs {numel}"));
        }
        Ok(Self { shape, data })
    }

    pub fn from_f32(shape: Vec<usize>, values: Vec<f32>) -> Result<Self> {
        Self::new(shape, TensorData::F32(values))
    }

    pub fn from_i32(shape: Vec<usize>, values: Vec<i32>) -> Result<Self> {
        Self::new(shape, TensorData::I32(values))
    }

    /// Stores `values` as bf16 (rounding each to nearest even).
    pub fn from_f32_as_bf16(shape: Vec<usize>, values: &[f32]) -> Result<Self> {
        let bits = values.iter().map(|&v| f32_to_bf16_bits(v)).collect();
        Self::new(shape, TensorData::BF16(bits))
    }

    pub fn from_u4(shape: Vec<usize>, values: &[u8]) -> Result<Self> {
        Self::new(shape, TensorData::U4Packed(pack_u4(values)?))
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let numel = check_shape(&shape)?;
        Self::new(shape, TensorData::F32(vec![0.0; numel]))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn dtype(&self) -> DType {
        match self.data {
            TensorData::F32(_) => DType::F32,
            TensorData::BF16(_) => DType::BF16,
            TensorData::I32(_) => DType::I32,
            TensorData::I16(_) => DType::I16,
            TensorData::U8(_) => DType::U8,
            TensorData::U4Packed(_) => DType::U4Packed,
        }
    }

    pub fn as_f32(&self) -> Option<&[f32]> {
        match &self.data {
            TensorData::F32(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_i32(&self) -> Option<&[i32]> {
        match &self.data {
            TensorData::I32(v) => Some(v),
            _ => None,
        }
    }

    pub fn into_f32(self) -> Option<Vec<f32>> {
        match self.data {
            TensorData::F32(v) => Some(v),
            _ => None,
        }
    }

    /// Element values widened to `f32` regardless of dtype.
    pub fn to_f32_vec(&self) -> Vec<f32> {
        match &self.data {
            TensorData::F32(v) => v.clone(),
            TensorData::BF16(v) => v.iter().map(|&b| bf16_bits_to_f32(b)).collect(),
            TensorData::I32(v) => v.iter().map(|&x| x as f32).collect(),
            TensorData::I16(v) => v.iter().map(|&x| x as f32).collect(),
            TensorData::U8(v) => v.iter().map(|&x| x as f32).collect(),
            TensorData::U4Packed(v) => unpack_u4(v, self.numel()).into_iter().map(f32::from).collect(),
        }
    }

    /// Element values as `i32` for integer dtypes; `None` for float dtypes.
    pub fn to_i32_vec(&self) -> Option<Vec<i32>> {
        match &self.data {
            TensorData::I32(v) => Some(v.clone()),
            TensorData::I16(v) => Some(v.iter().map(|&x| x as i32).collect()),
            TensorData::U8(v) => Some(v.iter().map(|&x| x as i32).collect()),
            TensorData::U4Packed(v) => Some(unpack_u4(v, self.numel()).into_iter().map(i32::from).collect()),
            TensorData::F32(_) | TensorData::BF16(_) => None,
        }
    }

    /// Returns a copy with a new shape of equal element count.
    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Self> {
        let numel = check_shape(&shape)?;
        if numel != self.numel() {
            return Err(shape_err!("cannot reshape {:?} into {shape:?}", self.shape));
        }
        Ok(Self { shape, data: self.data.clone() })
    }

    /// Row-major little-endian payload bytes.
    pub fn payload_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.dtype().payload_len(self.numel()));
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::BF16(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::I32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::I16(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::U8(v) | TensorData::U4Packed(v) => out.extend_from_slice(v),
        }
        out
    }

    /// Inverse of [`Tensor::payload_bytes`].
    pub fn from_payload(dtype: DType, shape: Vec<usize>, bytes: &[u8]) -> Result<Self> {
        let numel = check_shape(&shape)?;
        let expected = dtype.payload_len(numel);
        if bytes.len() != expected {
            return Err(format_err!("payload is {} bytes, expected {expected}", bytes.len()));
        }
        let data = match dtype {
            DType::F32 => {
                TensorData::F32(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
            }
            DType::BF16 => {
                TensorData::BF16(bytes.chunks_exact(2).map(|c| u16::from_le_bytes(c.try_into().unwrap())).collect())
            }
            DType::I32 => {
                TensorData::I32(bytes.chunks_exact(4).map(|c| i32::from_le_bytes(c.try_into().unwrap())).collect())
            }
            DType::I16 => {
                TensorData::I16(bytes.chunks_exact(2).map(|c| i16::from_le_bytes(c.try_into().unwrap())).collect())
            }
            DType::U8 => TensorData::U8(bytes.to_vec()),
            DType::U4Packed => TensorData::U4Packed(bytes.to_vec()),
        };
        Self::new(shape, data)
    }
}

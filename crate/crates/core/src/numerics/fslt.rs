//! The `FSLT` tensor container.
//!
//! Layout (little-endian): magic `FSLT`, version byte `1`, dtype byte, rank
//! byte, `rank` x u32 dims, then the raw row-major payload.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{format_err, Result};

use super::tensor::{DType, Tensor, MAX_RANK};

pub const FSLT_MAGIC: [u8; 4] = *b"FSLT";
pub const FSLT_VERSION: u8 = 1;

pub fn encode_fslt(t: &Tensor) -> Vec<u8> {
    let payload = t.payload_bytes();
    let mut out = Vec::with_capacity(7 + 4 * t.rank() + payload.len());
    out.extend_from_slice(&FSLT_MAGIC);
    out.push(FSLT_VERSION);
    out.push(t.dtype() as u8);
    out.push(t.rank() as u8);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&payload);
    out
}

pub fn decode_fslt(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 7 || bytes[..4] != FSLT_MAGIC {
        return Err(format_err!("not an FSLT stream"));
    }
    if bytes[4] != FSLT_VERSION {
        return Err(format_err!("unsupported FSLT version {}", bytes[4]));
    }
    let dtype = DType::from_byte(bytes[5])?;
    let rank = bytes[6] as usize;
    if rank == 0 || rank > MAX_RANK {
        return Err(format_err!("FSLT rank {rank} out of range"));
    }
    let dims_end = 7 + 4 * rank;
    if bytes.len() < dims_end {
        return Err(format_err!("truncated FSLT header"));
    }
    let shape: Vec<usize> =
        bytes[7..dims_end].chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize).collect();
    Tensor::from_payload(dtype, shape, &bytes[dims_end..])
}

pub fn write_fslt<W: Write>(mut w: W, t: &Tensor) -> Result<()> {
    w.write_all(&encode_fslt(t))?;
    Ok(())
}

pub fn read_fslt<R: Read>(mut r: R) -> Result<Tensor> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode_fslt(&bytes)
}

pub fn save_fslt(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    std::fs::write(path, encode_fslt(t))?;
    Ok(())
}

pub fn load_fslt(path: impl AsRef<Path>) -> Result<Tensor> {
    decode_fslt(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::tensor::TensorData;
    use proptest::prelude::*;

    #[test]
    fn header_is_bit_exact() {
        let t = Tensor::from_u4(vec![1, 3], &[0xA, 0x1, 0xF]).unwrap();
        let bytes = encode_fslt(&t);
        assert_eq!(bytes, vec![0x46, 0x53, 0x4C, 0x54, 1, 5, 2, 1, 0, 0, 0, 3, 0, 0, 0, 0x1A, 0x0F]);
        assert_eq!(decode_fslt(&bytes).unwrap(), t);
    }

    #[test]
    fn rejects_corrupt_streams() {
        let t = Tensor::from_f32(vec![2], vec![1.0, 2.0]).unwrap();
        let mut bytes = encode_fslt(&t);
        assert!(decode_fslt(&bytes[..bytes.len() - 1]).is_err());
        bytes[5] = 9;
        assert!(decode_fslt(&bytes).is_err());
        assert!(decode_fslt(b"FSLX\x01\x00\x01").is_err());
    }

    proptest! {
        #[test]
        fn round_trips(values in proptest::collection::vec(any::<i32>(), 1..50), split in 1usize..4) {
            let n = values.len();
            let shape = if n % split == 0 { vec![split, n / split] } else { vec![n] };
            let t = Tensor::new(shape, TensorData::I32(values)).unwrap();
            prop_assert_eq!(decode_fslt(&encode_fslt(&t)).unwrap(), t);
        }
    }
}

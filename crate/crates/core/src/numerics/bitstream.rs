//! LSB-first packing of fixed-width unsigned fields.

use crate::error::{format_err, Result};

/// Packs each value into `width` bits, least significant bit first.
/// `width == 0` produces an empty stream.
pub fn pack_bits(values: impl IntoIterator<Item = u32>, width: u32) -> Vec<u8> {
    debug_assert!(width <= 32);
    let mut out = Vec::new();
    let mut acc: u64 = 0;
    let mut filled = 0u32;
    for v in values {
        if width == 0 {
            continue;
        }
        debug_assert!(width == 32 || v < (1u32 << width));
        acc |= (v as u64) << filled;
        filled += width;
        while filled >= 8 {
            out.push(acc as u8);
            acc >>= 8;
            filled -= 8;
        }
    }
    if filled > 0 {
        out.push(acc as u8);
    }
    out
}

/// Number of bytes [`pack_bits`] produces for `count` fields.
pub fn packed_len(count: usize, width: u32) -> usize {
    (count * width as usize).div_ceil(8)
}

/// Reads `count` fields of `width` bits from `bytes`.
pub fn unpack_bits(bytes: &[u8], count: usize, width: u32) -> Result<Vec<u32>> {
    if bytes.len() < packed_len(count, width) {
        return Err(format_err!("bit stream has {} bytes, need {}", bytes.len(), packed_len(count, width)));
    }
    if width == 0 {
        return Ok(vec![0; count]);
    }
    let mask = if width == 32 { u32::MAX as u64 } else { (1u64 << width) - 1 };
    let mut out = Vec::with_capacity(count);
    let mut acc: u64 = 0;
    let mut filled = 0u32;
    let mut pos = 0usize;
    for _ in 0..count {
        while filled < width {
            acc |= (bytes[pos] as u64) << filled;
            pos += 1;
            filled += 8;
        }
        out.push((acc & mask) as u32);
        acc >>= width;
        filled -= width;
    }
    Ok(out)
}

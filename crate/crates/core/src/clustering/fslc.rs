//! The `FSLC` clustered-model container.
//!
//! Layout (little-endian): magic `FSLC`, version byte, u32 layer count; then
//! per layer seven u32 fields (cout, cin, k, ch_sub, N, stride, padding), the
//! codebooks as `cout·groups·N` bf16 words, and the `[cout, cin, k, k]`
//! indices packed LSB-first at `log2 N` bits each, padded to a byte.

use crate::error::{format_err, Result};
use crate::numerics::bitstream::{pack_bits, packed_len, unpack_bits};
use crate::numerics::{bf16_bits_to_f32, f32_to_bf16_bits};
use crate::wire::{put_u32, Reader};

use super::layer::ClusteredLayer;

pub const FSLC_MAGIC: [u8; 4] = *b"FSLC";
pub const FSLC_VERSION: u8 = 1;

pub(crate) fn write_layer(out: &mut Vec<u8>, l: &ClusteredLayer) {
    for v in [l.cout, l.cin, l.k, l.ch_sub, l.n_centroids, l.stride, l.padding] {
        put_u32(out, v);
    }
    for &c in &l.codebooks {
        out.extend_from_slice(&f32_to_bf16_bits(c).to_le_bytes());
    }
    out.extend(pack_bits(l.indices.iter().map(|&i| i as u32), l.index_bits()));
}

pub(crate) fn read_layer(r: &mut Reader<'_>) -> Result<ClusteredLayer> {
    let mut f = [0usize; 7];
    for v in &mut f {
        *v = r.usize()?;
    }
    let [cout, cin, k, ch_sub, n_centroids, stride, padding] = f;
    if ch_sub == 0 || n_centroids == 0 || !n_centroids.is_power_of_two() {
        return Err(format_err!("bad clustered layer header {f:?}"));
    }
    let groups = cin.div_ceil(ch_sub);
    let codebooks = r
        .take(2 * cout * groups * n_centroids)?
        .chunks_exact(2)
        .map(|c| bf16_bits_to_f32(u16::from_le_bytes([c[0], c[1]])))
        .collect();
    let count = cout * cin * k * k;
    let width = n_centroids.trailing_zeros();
    let indices = unpack_bits(r.take(packed_len(count, width))?, count, width)?.into_iter().map(|i| i as u8).collect();
    let layer = ClusteredLayer { cout, cin, k, ch_sub, n_centroids, codebooks, indices, stride, padding };
    layer.validate().map_err(|e| format_err!("invalid clustered layer: {e}"))?;
    Ok(layer)
}

pub fn encode_fslc(layers: &[ClusteredLayer]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&FSLC_MAGIC);
    out.push(FSLC_VERSION);
    put_u32(&mut out, layers.len());
    for l in layers {
        write_layer(&mut out, l);
    }
    out
}

pub(crate) fn read_fslc(r: &mut Reader<'_>) -> Result<Vec<ClusteredLayer>> {
    if r.take(4)? != FSLC_MAGIC {
        return Err(format_err!("not an FSLC stream"));
    }
    let version = r.u8()?;
    if version != FSLC_VERSION {
        return Err(format_err!("unsupported FSLC version {version}"));
    }
    let n = r.usize()?;
    (0..n).map(|_| read_layer(r)).collect()
}

pub fn decode_fslc(bytes: &[u8]) -> Result<Vec<ClusteredLayer>> {
    let mut r = Reader::new(bytes);
    let layers = read_fslc(&mut r)?;
    if !r.is_empty() {
        return Err(format_err!("trailing bytes after FSLC layers"));
    }
    Ok(layers)
}

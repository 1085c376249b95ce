//! The `FSLH` class-memory container.
//!
//! Layout (little-endian): magic `FSLH`, version byte, u32 class count,
//! u32 dimension, bits byte, u32 branch count. Per branch: u32 feature dim,
//! u64 encoder seed, then per class u64 scale numerator, u32 scale
//! denominator and u32 shot count, then all `C·D` values packed LSB-first at
//! `bits` each (two's complement; at 1 bit, 1 is +1 and 0 is −1), padded to a
//! byte.

use std::path::Path;

use crate::crp::CrpConfig;
use crate::error::{format_err, Result};
use crate::numerics::bitstream::{pack_bits, packed_len, unpack_bits};
use crate::wire::{put_u32, put_u64, Reader};

use super::memory::{BranchTable, ClassMemory, ClassVector};

pub const FSLH_MAGIC: [u8; 4] = *b"FSLH";
pub const FSLH_VERSION: u8 = 1;

fn to_field(v: i32, bits: u8) -> u32 {
    if bits == 1 {
        (v > 0) as u32
    } else {
        (v as u32) & ((1u64 << bits) - 1) as u32
    }
}

fn from_field(f: u32, bits: u8) -> i32 {
    if bits == 1 {
        if f == 1 {
            1
        } else {
            -1
        }
    } else {
        let shift = 32 - bits as u32;
        ((f << shift) as i32) >> shift
    }
}

pub fn encode_fslh(m: &ClassMemory) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&FSLH_MAGIC);
    out.push(FSLH_VERSION);
    put_u32(&mut out, m.n_classes());
    put_u32(&mut out, m.hv_dim());
    out.push(m.bits());
    put_u32(&mut out, m.branch_count());
    for t in m.branches() {
        put_u32(&mut out, t.encoder.feature_dim);
        put_u64(&mut out, t.encoder.seed);
        for c in &t.classes {
            put_u64(&mut out, c.scale_num);
            put_u32(&mut out, c.scale_den as usize);
            put_u32(&mut out, c.shots as usize);
        }
        let values = t.classes.iter().flat_map(|c| c.values.iter().map(|&v| to_field(v, m.bits())));
        out.extend(pack_bits(values, m.bits() as u32));
    }
    out
}

pub fn decode_fslh(bytes: &[u8]) -> Result<ClassMemory> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != FSLH_MAGIC {
        return Err(format_err!("not an FSLH stream"));
    }
    let version = r.u8()?;
    if version != FSLH_VERSION {
        return Err(format_err!("unsupported FSLH version {version}"));
    }
    let n_classes = r.usize()?;
    let hv_dim = r.usize()?;
    let bits = r.u8()?;
    let n_branches = r.usize()?;
    if !(1..=16).contains(&bits) || n_classes > super::memory::MAX_CLASSES || n_branches > 64 {
        return Err(format_err!("bad FSLH header: C={n_classes} bits={bits} branches={n_branches}"));
    }
    let mut branches = Vec::with_capacity(n_branches);
    for _ in 0..n_branches {
        let feature_dim = r.usize()?;
        let seed = r.u64()?;
        let encoder = CrpConfig::new(feature_dim, hv_dim, seed).map_err(|e| format_err!("bad FSLH encoder: {e}"))?;
        let mut classes = Vec::with_capacity(n_classes);
        for _ in 0..n_classes {
            let scale_num = r.u64()?;
            let scale_den = r.u32()?;
            let shots = r.u32()?;
            classes.push(ClassVector { values: Vec::new(), scale_num, scale_den, shots });
        }
        let count = n_classes * hv_dim;
        let fields = unpack_bits(r.take(packed_len(count, bits as u32))?, count, bits as u32)?;
        for (c, chunk) in classes.iter_mut().zip(fields.chunks_exact(hv_dim)) {
            c.values = chunk.iter().map(|&f| from_field(f, bits)).collect();
        }
        branches.push(BranchTable { encoder, classes });
    }
    if !r.is_empty() {
        return Err(format_err!("trailing bytes after FSLH branches"));
    }
    ClassMemory::new(bits, branches).map_err(|e| format_err!("invalid FSLH memory: {e}"))
}

pub fn save_fslh(path: impl AsRef<Path>, m: &ClassMemory) -> Result<()> {
    std::fs::write(path, encode_fslh(m))?;
    Ok(())
}

pub fn load_fslh(path: impl AsRef<Path>) -> Result<ClassMemory> {
    decode_fslh(&std::fs::read(path)?)
}

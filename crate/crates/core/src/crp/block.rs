//! Cyclic random-projection blocks.
//!
//! The `D x F` projection matrix is tiled into 16x16 blocks. Block
//! `(block_row, block_col)` is produced by sixteen LFSRs, one per block row,
//! after `s = block_row · (F/16) + block_col` block-steps of 16 shifts each.
//! Bit `c` of LFSR `r` gives entry `(r, c)`: 1 maps to +1, 0 to −1. Only the
//! sixteen initial states need to be stored.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

use super::lfsr::{step, Gf2Map};

/// Side of a cyclic block.
pub const BLOCK_SIDE: usize = 16;
/// Elements per block.
pub const BLOCK_ELEMS: usize = BLOCK_SIDE * BLOCK_SIDE;
/// LFSR shifts per block-step.
pub const SHIFTS_PER_BLOCK: u64 = 16;

pub const MIN_FEATURE_DIM: usize = 16;
pub const MAX_FEATURE_DIM: usize = 1024;
pub const MIN_HV_DIM: usize = 16;
pub const MAX_HV_DIM: usize = 8192;

/// Encoder geometry and seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CrpConfig {
    #[serde(rename = "F")]
    pub feature_dim: usize,
    #[serde(rename = "D")]
    pub hv_dim: usize,
    pub seed: u64,
}

impl CrpConfig {
    pub fn new(feature_dim: usize, hv_dim: usize, seed: u64) -> Result<Self> {
        let c = Self { feature_dim, hv_dim, seed };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: usize, lo: usize, hi: usize| v.is_multiple_of(BLOCK_SIDE) && (lo..=hi).contains(&v);
        if !ok(self.feature_dim, MIN_FEATURE_DIM, MAX_FEATURE_DIM) {
            return Err(invalid!(
                "feature dim must be a multiple of 16 in {MIN_FEATURE_DIM}..={MAX_FEATURE_DIM}, got {}",
                self.feature_dim
            ));
        }
        if !ok(self.hv_dim, MIN_HV_DIM, MAX_HV_DIM) {
            return Err(invalid!(
                "hypervector dim must be a multiple of 16 in {MIN_HV_DIM}..={MAX_HV_DIM}, got {}",
                self.hv_dim
            ));
        }
        Ok(())
    }

    pub fn block_rows(&self) -> usize {
        self.hv_dim / BLOCK_SIDE
    }

    pub fn block_cols(&self) -> usize {
        self.feature_dim / BLOCK_SIDE
    }

    pub fn block_count(&self) -> usize {
        self.block_rows() * self.block_cols()
    }

    /// Initial state of LFSR `row`: the 64-bit seed folded to 16 bits, XOR
    /// `(row + 1) · 0x9E37`; zero is remapped to 1.
    pub fn initial_state(&self, row: usize) -> u16 {
        let s = self.seed;
        let folded = (s ^ (s >> 16) ^ (s >> 32) ^ (s >> 48)) as u16;
        let mixed = folded ^ ((row as u16).wrapping_add(1)).wrapping_mul(0x9E37);
        if mixed == 0 {
            1
        } else {
            mixed
        }
    }

    pub fn initial_states(&self) -> [u16; BLOCK_SIDE] {
        std::array::from_fn(|r| self.initial_state(r))
    }
}

/// One 16x16 block; `rows[r]` bit `c` is the sign of entry `(r, c)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CrpBlock {
    pub rows: [u16; BLOCK_SIDE],
}

impl CrpBlock {
    #[inline]
    pub fn entry(&self, r: usize, c: usize) -> i8 {
        if self.rows[r] >> c & 1 == 1 {
            1
        } else {
            -1
        }
    }

    pub fn to_bipolar(&self) -> [[i8; BLOCK_SIDE]; BLOCK_SIDE] {
        std::array::from_fn(|r| std::array::from_fn(|c| self.entry(r, c)))
    }
}

/// Advances all sixteen LFSRs by one block-step.
#[inline]
pub(crate) fn advance_block(states: &mut [u16; BLOCK_SIDE]) {
    for s in states.iter_mut() {
        for _ in 0..SHIFTS_PER_BLOCK {
            *s = step(*s);
        }
    }
}

/// Random access to any block via LFSR jump-ahead.
pub fn generate_block(config: &CrpConfig, block_row: usize, block_col: usize) -> Result<CrpBlock> {
    config.validate()?;
    if block_row >= config.block_rows() || block_col >= config.block_cols() {
        return Err(invalid!(
            "block ({block_row}, {block_col}) outside {}x{} grid",
            config.block_rows(),
            config.block_cols()
        ));
    }
    let s = (block_row * config.block_cols() + block_col) as u64;
    let jump = Gf2Map::single_step().pow((s * SHIFTS_PER_BLOCK) % super::lfsr::PERIOD as u64);
    Ok(CrpBlock { rows: config.initial_states().map(|st| jump.apply(st)) })
}

/// Yields blocks in storage order: all block columns of block row 0, then block row 1, ...
pub struct BlockStream {
    states: [u16; BLOCK_SIDE],
    remaining: usize,
}

impl BlockStream {
    pub fn new(config: &CrpConfig) -> Self {
        Self { states: config.initial_states(), remaining: config.block_count() }
    }
}

impl Iterator for BlockStream {
    type Item = CrpBlock;

    fn next(&mut self) -> Option<CrpBlock> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let block = CrpBlock { rows: self.states };
        advance_block(&mut self.states);
        Some(block)
    }
}

/// Materializes the full `D x F` ±1 matrix, row-major.
pub fn materialize(config: &CrpConfig) -> Result<Vec<i8>> {
    config.validate()?;
    let (d, f) = (config.hv_dim, config.feature_dim);
    let mut m = vec![0i8; d * f];
    for br in 0..config.block_rows() {
        for bc in 0..config.block_cols() {
            let b = generate_block(config, br, bc)?;
            for r in 0..BLOCK_SIDE {
                for c in 0..BLOCK_SIDE {
                    m[(br * BLOCK_SIDE + r) * f + bc * BLOCK_SIDE + c] = b.entry(r, c);
                }
            }
        }
    }
    Ok(m)
}

/// Bits needed to store the full binary projection matrix.
pub fn dense_memory_bits(config: &CrpConfig) -> u64 {
    (config.feature_dim * config.hv_dim) as u64
}

/// Bits needed by the cyclic scheme: one cached 256-bit block plus sixteen 16-bit LFSR states.
pub fn crp_memory_bits(_config: &CrpConfig) -> u64 {
    (BLOCK_ELEMS + BLOCK_SIDE * 16) as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_bipolar() {
        let cfg = CrpConfig::new(32, 32, 99).unwrap();
        let a = generate_block(&cfg, 0, 0).unwrap();
        assert_eq!(a, generate_block(&cfg, 0, 0).unwrap());
        let m = a.to_bipolar();
        assert_eq!(m.iter().flatten().count(), 256);
        assert!(m.iter().flatten().all(|&v| v == 1 || v == -1));
        assert_eq!(a.rows, cfg.initial_states());
    }

    #[test]
    fn stream_matches_random_access() {
        let cfg = CrpConfig::new(48, 64, 7).unwrap();
        let streamed: Vec<CrpBlock> = BlockStream::new(&cfg).collect();
        assert_eq!(streamed.len(), 12);
        for (i, b) in streamed.iter().enumerate() {
            assert_eq!(*b, generate_block(&cfg, i / 3, i % 3).unwrap());
        }
    }

    #[test]
    fn materialized_matrix_tiles_blocks() {
        let cfg = CrpConfig::new(32, 32, 5).unwrap();
        let m = materialize(&cfg).unwrap();
        for br in 0..2 {
            for bc in 0..2 {
                let b = generate_block(&cfg, br, bc).unwrap().to_bipolar();
                for r in 0..16 {
                    for c in 0..16 {
                        assert_eq!(m[(br * 16 + r) * 32 + bc * 16 + c], b[r][c]);
                    }
                }
            }
        }
    }

    #[test]
    fn out_of_range_blocks_and_bad_configs() {
        let cfg = CrpConfig::new(32, 32, 5).unwrap();
        assert!(generate_block(&cfg, 2, 0).is_err());
        assert!(generate_block(&cfg, 0, 2).is_err());
        assert!(CrpConfig::new(20, 32, 0).is_err());
        assert!(CrpConfig::new(2048, 32, 0).is_err());
        assert!(CrpConfig::new(32, 8208, 0).is_err());
        assert!(CrpConfig::new(32, 0, 0).is_err());
    }

    #[test]
    fn initial_states_are_nonzero() {
        for seed in [0u64, 1, 0x9E37, u64::MAX] {
            let cfg = CrpConfig::new(16, 16, seed).unwrap();
            assert!(cfg.initial_states().iter().all(|&s| s != 0));
        }
    }

    #[test]
    fn memory_claims() {
        let cfg = CrpConfig::new(512, 4096, 0).unwrap();
        assert_eq!(dense_memory_bits(&cfg), 2_097_152);
        assert_eq!(dense_memory_bits(&cfg) / 8, 256 * 1024);
        assert_eq!(crp_memory_bits(&cfg), 512);
        assert_eq!(dense_memory_bits(&cfg) / crp_memory_bits(&cfg), 4096);
        assert_eq!(crp_memory_bits(&CrpConfig::new(16, 16, 0).unwrap()), 512);
    }

    #[test]
    fn seeds_give_different_matrices() {
        let a = materialize(&CrpConfig::new(256, 1024, 1).unwrap()).unwrap();
        let b = materialize(&CrpConfig::new(256, 1024, 2).unwrap()).unwrap();
        let differ = a.iter().zip(&b).filter(|(x, y)| x != y).count();
        assert!(differ as f64 >= 0.45 * a.len() as f64, "{differ} of {}", a.len());
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

use super::block::{advance_block, BlockStream, CrpConfig, BLOCK_SIDE};

/// A D-dimensional integer hypervector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hypervector {
    pub values: Vec<i32>,
    /// Signed bit width the values are declared to fit.
    pub declared_bits: u8,
}

/// Smallest signed two's-complement width holding every value (at least 1).
pub fn required_bits(values: &[i32]) -> u8 {
    values
        .iter()
        .map(|&v| {
            let v = v as i64;
            let mag = if v < 0 { !v } else { v };
            (64 - mag.leading_zeros()) as u8 + 1
        })
        .max()
        .unwrap_or(1)
}

impl Hypervector {
    /// Wraps `values`, declaring the narrowest width that fits them.
    pub fn new(values: Vec<i32>) -> Self {
        let declared_bits = required_bits(&values);
        Self { values, declared_bits }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Adds one block's contribution to sixteen output lanes. `total` is the
/// segment sum, so each lane gets `2 · (sum over +1 entries) − total`.
#[inline]
fn lane_update(lanes: &mut [i32], rows: &[u16; BLOCK_SIDE], seg: &[i32], total: i64) -> Result<()> {
    for (lane, &row) in lanes.iter_mut().zip(rows) {
        let mut positive = 0i64;
        let mut bits = row;
        while bits != 0 {
            positive += seg[bits.trailing_zeros() as usize] as i64;
            bits &= bits - 1;
        }
        let sum = *lane as i64 + 2 * positive - total;
        *lane = i32::try_from(sum).map_err(|_| Error::Overflow("hypervector lane exceeds i32".into()))?;
    }
    Ok(())
}

/// Projects integer feature vectors through the cyclic random-projection matrix.
///
/// The plain encoder regenerates blocks from the LFSRs on every call, in
/// block-row-major order, sixteen output lanes per block row. The cached
/// encoder materializes the ±1 matrix once (one byte per entry) and runs
/// plain dot products; both produce identical results.
#[derive(Debug, Clone)]
pub struct CrpEncoder {
    config: CrpConfig,
    cache: Option<Vec<i8>>,
}

impl CrpEncoder {
    pub fn new(config: CrpConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, cache: None })
    }

    pub fn cached(config: CrpConfig) -> Result<Self> {
        config.validate()?;
        let f = config.feature_dim;
        let mut m = vec![0i8; config.hv_dim * f];
        for (i, block) in BlockStream::new(&config).enumerate() {
            let (br, bc) = (i / config.block_cols(), i % config.block_cols());
            for (r, &row) in block.rows.iter().enumerate() {
                let start = (br * BLOCK_SIDE + r) * f + bc * BLOCK_SIDE;
                for (c, e) in m[start..start + BLOCK_SIDE].iter_mut().enumerate() {
                    *e = if row >> c & 1 == 1 { 1 } else { -1 };
                }
            }
        }
        Ok(Self { config, cache: Some(m) })
    }

    pub fn config(&self) -> &CrpConfig {
        &self.config
    }

    /// `h = M · x` with 32-bit accumulation; overflow is an error.
    pub fn encode(&self, features: &[i32]) -> Result<Hypervector> {
        if features.len() != self.config.feature_dim {
            return Err(shape_err!(
                "feature has {} entries, encoder expects {}",
                features.len(),
                self.config.feature_dim
            ));
        }
        if let Some(m) = &self.cache {
            let values = m
                .chunks_exact(features.len())
                .map(|row| {
                    let dot: i64 = row.iter().zip(features).map(|(&a, &x)| a as i64 * x as i64).sum();
                    i32::try_from(dot).map_err(|_| Error::Overflow("hypervector lane exceeds i32".into()))
                })
                .collect::<Result<Vec<i32>>>()?;
            return Ok(Hypervector::new(values));
        }
        let segments: Vec<(&[i32], i64)> =
            features.chunks_exact(BLOCK_SIDE).map(|seg| (seg, seg.iter().map(|&v| v as i64).sum())).collect();
        let mut out = vec![0i32; self.config.hv_dim];

        let mut states = self.config.initial_states();
        for lanes in out.chunks_exact_mut(BLOCK_SIDE) {
            for &(seg, total) in &segments {
                lane_update(lanes, &states, seg, total)?;
                advance_block(&mut states);
            }
        }
        Ok(Hypervector::new(out))
    }
}

/// One-shot streaming encode.
pub fn encode(config: &CrpConfig, features: &[i32]) -> Result<Hypervector> {
    CrpEncoder::new(*config)?.encode(features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crp::block::{generate_block, materialize};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_oracle(cfg: &CrpConfig, x: &[i32]) -> Vec<i32> {
        let m = materialize(cfg).unwrap();
        (0..cfg.hv_dim)
            .map(|d| (0..cfg.feature_dim).map(|f| m[d * cfg.feature_dim + f] as i64 * x[f] as i64).sum::<i64>() as i32)
            .collect()
    }

    #[test]
    fn zero_feature_gives_zero_hv() {
        let cfg = CrpConfig::new(32, 64, 1).unwrap();
        assert!(encode(&cfg, &[0; 32]).unwrap().values.iter().all(|&v| v == 0));
    }

    #[test]
    fn unit_vector_extracts_a_column() {
        let cfg = CrpConfig::new(16, 16, 3).unwrap();
        let block = generate_block(&cfg, 0, 0).unwrap();
        for j in 0..16 {
            let mut x = [0i32; 16];
            x[j] = 1;
            let h = encode(&cfg, &x).unwrap();
            let col: Vec<i32> = (0..16).map(|r| block.entry(r, j) as i32).collect();
            assert_eq!(h.values, col);
        }
    }

    #[test]
    fn matches_dense_product() {
        let cfg = CrpConfig::new(32, 64, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cached = CrpEncoder::cached(cfg).unwrap();
        for _ in 0..20 {
            let x: Vec<i32> = (0..32).map(|_| rng.random_range(0..16)).collect();
            let h = encode(&cfg, &x).unwrap();
            assert_eq!(h.values, dense_oracle(&cfg, &x));
            assert_eq!(cached.encode(&x).unwrap(), h);
        }
    }

    #[test]
    fn dimension_mismatch_and_overflow() {
        let cfg = CrpConfig::new(32, 64, 11).unwrap();
        assert!(matches!(encode(&cfg, &[1; 16]), Err(Error::ShapeMismatch(_))));
        assert!(matches!(encode(&cfg, &[i32::MAX; 32]), Err(Error::Overflow(_))));
    }

    #[test]
    fn required_bits_examples() {
        assert_eq!(required_bits(&[0]), 1);
        assert_eq!(required_bits(&[-1]), 1);
        assert_eq!(required_bits(&[1]), 2);
        assert_eq!(required_bits(&[-8, 7]), 4);
        assert_eq!(required_bits(&[8]), 5);
        assert_eq!(required_bits(&[i32::MIN]), 32);
    }

    proptest! {
        #[test]
        fn encoding_is_linear(
            x in proptest::collection::vec(-64i32..64, 48),
            y in proptest::collection::vec(-64i32..64, 48),
            a in -20i32..20,
            b in -20i32..20,
            seed in any::<u64>(),
        ) {
            let cfg = CrpConfig::new(48, 32, seed).unwrap();
            let combo: Vec<i32> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let hx = encode(&cfg, &x).unwrap();
            let hy = encode(&cfg, &y).unwrap();
            let hc = encode(&cfg, &combo).unwrap();
            let expected: Vec<i32> = hx.values.iter().zip(&hy.values).map(|(p, q)| a * p + b * q).collect();
            prop_assert_eq!(hc.values, expected);
        }
    }
}

//! Class hypervector aggregation and quantized class memory.

use serde::{Deserialize, Serialize};

use crate::crp::CrpConfig;
use crate::error::{invalid, shape_err, Error, Result};

pub const MIN_CLASSES: usize = 2;
pub const MAX_CLASSES: usize = 128;
/// On-chip class memory capacity: 256 KB.
pub const CLASS_MEMORY_BUDGET_BITS: u64 = 256 * 1024 * 8;

fn check_bits(bits: u8) -> Result<()> {
    if !(1..=16).contains(&bits) {
        return Err(invalid!("class memory precision must be 1..=16 bits, got {bits}"));
    }
    Ok(())
}

/// Unquantized per-class sums of hypervectors, accumulated in `i32` with
/// overflow checks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassSums {
    hv_dim: usize,
    sums: Vec<Vec<i32>>,
    shots: Vec<u32>,
}

impl ClassSums {
    pub fn new(n_classes: usize, hv_dim: usize) -> Self {
        Self { hv_dim, sums: vec![vec![0; hv_dim]; n_classes], shots: vec![0; n_classes] }
    }

    pub fn n_classes(&self) -> usize {
        self.sums.len()
    }

    pub fn hv_dim(&self) -> usize {
        self.hv_dim
    }

    pub fn sum(&self, class: usize) -> &[i32] {
        &self.sums[class]
    }

    pub fn shots(&self, class: usize) -> u32 {
        self.shots[class]
    }

    /// Adds `weight` samples' worth of hypervector `hv` to `class`.
    /// Batched training adds one already-summed vector with `weight = k`.
    pub fn add_weighted(&mut self, class: usize, hv: &[i32], weight: u32) -> Result<()> {
        if class >= self.sums.len() {
            return Err(invalid!("label {class} outside 0..{}", self.sums.len()));
        }
        if hv.len() != self.hv_dim {
            return Err(shape_err!("hypervector has {} entries, memory expects {}", hv.len(), self.hv_dim));
        }
        for (acc, &v) in self.sums[class].iter_mut().zip(hv) {
            *acc = acc.checked_add(v).ok_or_else(|| Error::Overflow(format!("class {class} sum exceeds i32")))?;
        }
        self.shots[class] += weight;
        Ok(())
    }

    pub fn add(&mut self, class: usize, hv: &[i32]) -> Result<()> {
        self.add_weighted(class, hv, 1)
    }

    /// Quantizes every class to `bits`; fails if any class is empty.
    pub fn quantize(&self, bits: u8, encoder: CrpConfig) -> Result<BranchTable> {
        check_bits(bits)?;
        if let Some(c) = self.shots.iter().position(|&s| s == 0) {
            return Err(invalid!("class {c} has no training samples"));
        }
        let classes =
            self.sums.iter().zip(&self.shots).map(|(s, &shots)| ClassVector::quantize(s, bits, shots)).collect();
        Ok(BranchTable { encoder, classes })
    }
}

/// A quantized class hypervector. The stored values approximate the class
/// sum as `values · scale_num / scale_den`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassVector {
    pub values: Vec<i32>,
    pub scale_num: u64,
    pub scale_den: u32,
    pub shots: u32,
}

fn div_round_half_away(n: i128, d: i128) -> i128 {
    let q = n / d;
    let r = n % d;
    if 2 * r.abs() >= d.abs() {
        q + n.signum() * d.signum()
    } else {
        q
    }
}

impl ClassVector {
    /// Symmetric saturating quantization.
    ///
    /// For `bits >= 2` with `qmax = 2^(bits-1) - 1`: sums already within
    /// `±qmax` are stored as-is (scale 1); otherwise values are
    /// `round(sum · qmax / max|sum|)` with scale `max|sum| / qmax`.
    /// For `bits = 1` the values are signs (zero counts as +1) and the scale
    /// is the rounded mean magnitude.
    pub fn quantize(sum: &[i32], bits: u8, shots: u32) -> Self {
        let max_abs = sum.iter().map(|&v| (v as i64).unsigned_abs()).max().unwrap_or(0);
        if bits == 1 {
            let mean = if sum.is_empty() {
                0.0
            } else {
                sum.iter().map(|&v| (v as f64).abs()).sum::<f64>() / sum.len() as f64
            };
            let values = sum.iter().map(|&v| if v < 0 { -1 } else { 1 }).collect();
            return Self { values, scale_num: (mean.round() as u64).max(1), scale_den: 1, shots };
        }
        let qmax = (1u64 << (bits - 1)) - 1;
        if max_abs <= qmax {
            return Self { values: sum.to_vec(), scale_num: 1, scale_den: 1, shots };
        }
        let values =
            sum.iter().map(|&v| div_round_half_away(v as i128 * qmax as i128, max_abs as i128) as i32).collect();
        Self { values, scale_num: max_abs, scale_den: qmax as u32, shots }
    }

    pub fn scale(&self) -> f64 {
        self.scale_num as f64 / self.scale_den as f64
    }

    /// Approximate class sum recovered from the stored values.
    pub fn dequantized_sum(&self) -> Vec<i64> {
        self.values
            .iter()
            .map(|&v| div_round_half_away(v as i128 * self.scale_num as i128, self.scale_den as i128) as i64)
            .collect()
    }
}

/// The class vectors for one branch together with the encoder that produced them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchTable {
    pub encoder: CrpConfig,
    pub classes: Vec<ClassVector>,
}

/// Trained model: one class table per branch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMemory {
    n_classes: usize,
    hv_dim: usize,
    bits: u8,
    branches: Vec<BranchTable>,
}

impl ClassMemory {
    pub fn new(bits: u8, branches: Vec<BranchTable>) -> Result<Self> {
        check_bits(bits)?;
        let first = branches.first().ok_or_else(|| invalid!("class memory needs at least one branch"))?;
        let n_classes = first.classes.len();
        let hv_dim = first.encoder.hv_dim;
        if !(MIN_CLASSES..=MAX_CLASSES).contains(&n_classes) {
            return Err(invalid!("class count must be in {MIN_CLASSES}..={MAX_CLASSES}, got {n_classes}"));
        }
        for (b, t) in branches.iter().enumerate() {
            t.encoder.validate()?;
            if t.classes.len() != n_classes || t.encoder.hv_dim != hv_dim {
                return Err(shape_err!("branch {b} disagrees on class count or dimension"));
            }
            for c in &t.classes {
                if c.values.len() != hv_dim {
                    return Err(shape_err!("branch {b} class vector has {} entries", c.values.len()));
                }
                let fits = if bits == 1 {
                    c.values.iter().all(|&v| v == 1 || v == -1)
                } else {
                    let qmax = (1i32 << (bits - 1)) - 1;
                    c.values.iter().all(|&v| (-qmax..=qmax).contains(&v))
                };
                if !fits || c.scale_den == 0 || c.scale_num == 0 {
                    return Err(invalid!("branch {b} holds values outside {bits}-bit range or a zero scale"));
                }
            }
        }
        Ok(Self { n_classes, hv_dim, bits, branches })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn hv_dim(&self) -> usize {
        self.hv_dim
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    pub fn branches(&self) -> &[BranchTable] {
        &self.branches
    }

    pub fn branch(&self, b: usize) -> Result<&BranchTable> {
        self.branches.get(b).ok_or_else(|| invalid!("branch {b} outside 0..{}", self.branches.len()))
    }

    /// Storage for the class vectors: `branches · C · D · bits`.
    pub fn footprint_bits(&self) -> u64 {
        footprint_bits(self.branches.len(), self.n_classes, self.hv_dim, self.bits)
    }

    /// Adds more encoded samples to an existing branch by re-expanding the
    /// stored classes to approximate sums and re-quantizing. Exact when the
    /// stored scale is 1. Experimental.
    pub fn update_experimental(&mut self, branch: usize, samples: &[(Vec<i32>, usize)]) -> Result<()> {
        let table = self.branch(branch)?.clone();
        let mut sums = ClassSums::new(self.n_classes, self.hv_dim);
        for (c, cv) in table.classes.iter().enumerate() {
            let approx: Vec<i32> = cv
                .dequantized_sum()
                .into_iter()
                .map(|v| i32::try_from(v).map_err(|_| Error::Overflow("dequantized class sum exceeds i32".into())))
                .collect::<Result<_>>()?;
            sums.add_weighted(c, &approx, cv.shots)?;
        }
        for (hv, label) in samples {
            sums.add(*label, hv)?;
        }
        self.branches[branch] = sums.quantize(self.bits, table.encoder)?;
        Ok(())
    }
}

pub fn footprint_bits(branches: usize, n_classes: usize, hv_dim: usize, bits: u8) -> u64 {
    branches as u64 * n_classes as u64 * hv_dim as u64 * bits as u64
}

//! Storage and arithmetic savings of codebook-clustered convolutions.

use crate::error::{invalid, Result};

/// Bits per stored codebook centroid (bf16).
pub const CODEBOOK_ENTRY_BITS: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub cout: usize,
    pub cin: usize,
    pub k: usize,
}

/// Baseline weight storage over clustered storage:
/// `W·b / (W·log2 N + G·N·16)` with `W = cout·cin·k²` weights and
/// `G = cout·ceil(cin/ch_sub)` codebooks.
pub fn compression_ratio(shape: ConvShape, ch_sub: usize, n_centroids: usize, baseline_bits: u32) -> Result<f64> {
    if ch_sub == 0 || n_centroids == 0 || !n_centroids.is_power_of_two() {
        return Err(invalid!("need ch_sub >= 1 and a power-of-two centroid count"));
    }
    let weights = (shape.cout * shape.cin * shape.k * shape.k) as u64;
    let groups = (shape.cout * shape.cin.div_ceil(ch_sub)) as u64;
    let index_bits = n_centroids.trailing_zeros() as u64;
    let clustered = weights * index_bits + groups * n_centroids as u64 * CODEBOOK_ENTRY_BITS;
    Ok((weights * baseline_bits as u64) as f64 / clustered as f64)
}

/// Ops per output value per group, direct multiply-accumulate over clustered
/// accumulate-then-multiply: `(2·c·k² − 1) / (c·k² + 2N − 1)` for `c = ch_sub`.
pub fn op_reduction_ratio(k: usize, n_centroids: usize, ch_sub: usize) -> Result<f64> {
    if k == 0 || n_centroids == 0 || ch_sub == 0 {
        return Err(invalid!("k, n_centroids and ch_sub must be positive"));
    }
    let taps = (ch_sub * k * k) as f64;
    Ok((2.0 * taps - 1.0) / (taps + 2.0 * n_centroids as f64 - 1.0))
}

/// Symmetric per-tensor INT8 fake quantization (`scale = max|w| / 127`),
/// the reference point for clustering error.
pub fn int8_fake_quantize(weights: &[f32]) -> Vec<f32> {
    let max = weights.iter().fold(0.0f32, |m, w| m.max(w.abs()));
    if max == 0.0 {
        return weights.to_vec();
    }
    let scale = max / 127.0;
    weights.iter().map(|&w| (w / scale).round().clamp(-127.0, 127.0) * scale).collect()
}

//! Single-pass and batched class aggregation.

use crate::crp::{CrpConfig, CrpEncoder, Hypervector};
use crate::error::{invalid, shape_err, Error, Result};

use super::memory::{ClassMemory, ClassSums};

fn class_count<T>(samples: &[(T, usize)]) -> Result<usize> {
    samples.iter().map(|(_, l)| *l + 1).max().ok_or_else(|| invalid!("training set is empty"))
}

/// Sums the hypervectors of each class (labels `0..C`, `C` = max label + 1).
pub fn single_pass_sums(encoded: &[(Hypervector, usize)]) -> Result<ClassSums> {
    let n = class_count(encoded)?;
    let dim = encoded[0].0.dim();
    let mut sums = ClassSums::new(n, dim);
    for (hv, label) in encoded {
        sums.add(*label, &hv.values)?;
    }
    Ok(sums)
}

/// Sums the raw features of each class, then encodes every class sum once.
/// By linearity of the projection this equals [`single_pass_sums`] over the
/// per-sample encodings.
pub fn batched_sums(encoder: &CrpEncoder, features: &[(Vec<i32>, usize)]) -> Result<ClassSums> {
    let n = class_count(features)?;
    let f = encoder.config().feature_dim;
    let mut feature_sums = vec![vec![0i64; f]; n];
    let mut shots = vec![0u32; n];
    for (x, label) in features {
        if x.len() != f {
            return Err(shape_err!("feature has {} entries, encoder expects {f}", x.len()));
        }
        for (acc, &v) in feature_sums[*label].iter_mut().zip(x) {
            *acc += v as i64;
        }
        shots[*label] += 1;
    }
    let mut sums = ClassSums::new(n, encoder.config().hv_dim);
    for (c, fs) in feature_sums.iter().enumerate() {
        if shots[c] == 0 {
            continue;
        }
        let wide: Vec<i32> = fs
            .iter()
            .map(|&v| i32::try_from(v).map_err(|_| Error::Overflow(format!("class {c} feature sum exceeds i32"))))
            .collect::<Result<_>>()?;
        sums.add_weighted(c, &encoder.encode(&wide)?.values, shots[c])?;
    }
    Ok(sums)
}

/// Builds a single-branch memory from per-sample hypervectors.
pub fn train_single_pass(encoded: &[(Hypervector, usize)], encoder: CrpConfig, bits: u8) -> Result<ClassMemory> {
    if let Some((hv, _)) = encoded.iter().find(|(hv, _)| hv.dim() != encoder.hv_dim) {
        return Err(shape_err!("hypervector has {} entries, encoder produces {}", hv.dim(), encoder.hv_dim));
    }
    ClassMemory::new(bits, vec![single_pass_sums(encoded)?.quantize(bits, encoder)?])
}

/// Builds a single-branch memory by encoding one summed feature per class.
pub fn train_batched(features: &[(Vec<i32>, usize)], encoder: CrpConfig, bits: u8) -> Result<ClassMemory> {
    let enc = CrpEncoder::new(encoder)?;
    ClassMemory::new(bits, vec![batched_sums(&enc, features)?.quantize(bits, encoder)?])
}

//! Unsigned affine quantization for post-ReLU features.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

use super::tensor::Tensor;

/// Affine quantization parameters: `x ≈ (q - zero_point) * scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantParams {
    pub scale: f64,
    pub zero_point: i32,
    pub bits: u8,
}

impl QuantParams {
    pub fn max_code(&self) -> i32 {
        (1i32 << self.bits) - 1
    }

    pub fn dequantize(&self, q: i32) -> f64 {
        (q - self.zero_point) as f64 * self.scale
    }
}

fn check_bits(bits: u8) -> Result<()> {
    if !(1..=16).contains(&bits) {
        return Err(invalid!("bit width must be in 1..=16, got {bits}"));
    }
    Ok(())
}

/// Quantizes nonnegative features to `bits`-bit unsigned codes with
/// `zero_point = 0` and `scale = max(x) / (2^bits - 1)`. An all-zero input
/// uses `scale = 1`. Negative inputs clamp to code 0.
pub fn quantize_values(x: &[f32], bits: u8) -> Result<(Vec<i32>, QuantParams)> {
    check_bits(bits)?;
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("feature {i} is {}", x[i])));
    }
    let max_code = (1i32 << bits) - 1;
    let max = x.iter().fold(0.0f32, |m, &v| m.max(v)) as f64;
    let scale = if max > 0.0 { max / max_code as f64 } else { 1.0 };
    let codes = x.iter().map(|&v| ((v as f64 / scale).round() as i64).clamp(0, max_code as i64) as i32).collect();
    Ok((codes, QuantParams { scale, zero_point: 0, bits }))
}

/// Tensor form of [`quantize_values`]; the result is an `I32` tensor of the same shape.
pub fn quantize_features(x: &Tensor, bits: u8) -> Result<(Tensor, QuantParams)> {
    let values =
        x.as_f32().ok_or_else(|| invalid!("feature quantization expects an F32 tensor, got {:?}", x.dtype()))?;
    let (codes, params) = quantize_values(values, bits)?;
    Ok((Tensor::from_i32(x.shape().to_vec(), codes)?, params))
}

pub fn dequantize_values(q: &[i32], params: &QuantParams) -> Vec<f64> {
    q.iter().map(|&v| params.dequantize(v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_tensor_uses_unit_scale() {
        let (q, p) = quantize_values(&[0.0, 0.0, 0.0], 4).unwrap();
        assert_eq!(q, vec![0, 0, 0]);
        assert_eq!(p.scale, 1.0);
        assert_eq!(p.zero_point, 0);
    }

    #[test]
    fn midpoint_rounds_up() {
        let (q, p) = quantize_values(&[0.0, 7.5, 15.0], 4).unwrap();
        assert_eq!(q, vec![0, 8, 15]);
        assert_eq!(p.scale, 1.0);
    }

    #[test]
    fn single_value_saturates_to_max_code() {
        let (q, p) = quantize_values(&[3.0], 1).unwrap();
        assert_eq!(q, vec![1]);
        assert_eq!(p.scale, 3.0);
    }

    #[test]
    fn rejects_non_finite_and_bad_bits() {
        assert!(matches!(quantize_values(&[1.0, f32::NAN], 4), Err(Error::NonFinite(_))));
        assert!(matches!(quantize_values(&[f32::INFINITY], 4), Err(Error::NonFinite(_))));
        assert!(quantize_values(&[1.0], 0).is_err());
        assert!(quantize_values(&[1.0], 17).is_err());
    }

    #[test]
    fn tensor_wrapper_keeps_shape() {
        let t = Tensor::from_f32(vec![2, 2], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let (q, _) = quantize_features(&t, 2).unwrap();
        assert_eq!(q.shape(), &[2, 2]);
        assert_eq!(q.as_i32().unwrap(), &[0, 1, 2, 3]);
    }

    proptest! {
        #[test]
        fn error_within_half_scale(
            x in proptest::collection::vec(0.0f32..1000.0, 1..64),
            bits in 1u8..=16,
        ) {
            let (q, p) = quantize_values(&x, bits).unwrap();
            for (&code, &v) in q.iter().zip(&x) {
                prop_assert!((0..=p.max_code()).contains(&code));
                let err = (p.dequantize(code) - v as f64).abs();
                prop_assert!(err <= p.scale / 2.0 + 1e-9 * p.scale.max(1.0), "err {} scale {}", err, p.scale);
            }
        }
    }
}

//! Software bfloat16: 1 sign bit, 8 exponent bits, 7 mantissa bits.
//!
//! Values are carried as `f32` whose low 16 bits are zero. Conversion rounds
//! to nearest, ties to even. Every NaN maps to the canonical quiet NaN
//! `0x7FC0`.

/// Canonical quiet NaN in bf16 bit form.
pub const BF16_CANONICAL_NAN: u16 = 0x7FC0;

/// Converts `x` to bf16 bits with round-to-nearest-even.
#[inline]
pub fn f32_to_bf16_bits(x: f32) -> u16 {
    if x.is_nan() {
        return BF16_CANONICAL_NAN;
    }
    let bits = x.to_bits();
    let lsb = (bits >> 16) & 1;
    let rounded = bits.wrapping_add(0x7FFF + lsb);
    (rounded >> 16) as u16
}

/// Expands bf16 bits back to `f32` (exact).
#[inline]
pub fn bf16_bits_to_f32(bits: u16) -> f32 {
    f32::from_bits((bits as u32) << 16)
}

/// Rounds `x` to the nearest bf16-representable value.
#[inline]
pub fn bf16_round(x: f32) -> f32 {
    bf16_bits_to_f32(f32_to_bf16_bits(x))
}

/// True if `x` survives a bf16 round trip unchanged.
#[inline]
pub fn is_bf16_exact(x: f32) -> bool {
    x.is_nan() || x.to_bits() & 0xFFFF == 0
}

//! 16-bit Fibonacci LFSR with feedback polynomial x^16 + x^15 + x^13 + x^4 + 1.

use crate::error::{invalid, Result};

/// Period of a maximal-length 16-bit LFSR.
pub const PERIOD: u32 = (1 << 16) - 1;

/// One shift: the feedback bit is the XOR of taps 16, 15, 13 and 4 (state
/// bits 0, 1, 3 and 12), shifted in at bit 15.
#[inline]
pub(crate) fn step(s: u16) -> u16 {
    let fb = (s ^ (s >> 1) ^ (s >> 3) ^ (s >> 12)) & 1;
    (s >> 1) | (fb << 15)
}

/// Advances a nonzero state by one step.
pub fn lfsr_next(state: u16) -> Result<u16> {
    if state == 0 {
        return Err(invalid!("LFSR state must be nonzero"));
    }
    Ok(step(state))
}

/// A linear map over GF(2)^16, stored as the images of the 16 unit vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Gf2Map([u16; 16]);

impl Gf2Map {
    pub fn identity() -> Self {
        Self(std::array::from_fn(|j| 1 << j))
    }

    pub fn single_step() -> Self {
        Self(std::array::from_fn(|j| step(1 << j)))
    }

    #[inline]
    pub fn apply(&self, s: u16) -> u16 {
        let mut out = 0;
        let mut bits = s;
        while bits != 0 {
            let j = bits.trailing_zeros() as usize;
            out ^= self.0[j];
            bits &= bits - 1;
        }
        out
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Self {
        Self(std::array::from_fn(|j| self.apply(other.0[j])))
    }

    pub fn pow(&self, mut e: u64) -> Self {
        let mut base = *self;
        let mut acc = Self::identity();
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.compose(&base);
            }
            base = base.compose(&base);
            e >>= 1;
        }
        acc
    }
}

/// State after `steps` shifts from `state`, in O(log steps).
pub fn lfsr_jump(state: u16, steps: u64) -> u16 {
    Gf2Map::single_step().pow(steps % PERIOD as u64).apply(state)
}

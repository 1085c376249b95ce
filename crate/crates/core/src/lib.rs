//! Few-shot learning pipeline built from a weight-clustered convolutional
//! feature extractor and a hyperdimensional classifier.
//!
//! Features are extracted block by block, quantized to a few bits, projected
//! into a high-dimensional integer space by an LFSR-generated random ±1
//! matrix, and classified by L1 distance to per-class aggregated hypervectors.

pub mod clustering;
pub mod cost;
pub mod crp;
pub mod early_exit;
pub mod error;
pub mod extractor;
pub mod harness;
pub mod hdc;
pub mod numerics;
pub(crate) mod wire;

pub use error::{Error, ErrorClass, Result};

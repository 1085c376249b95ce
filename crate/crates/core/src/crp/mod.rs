//! Cyclic random-projection (cRP) hypervector encoder.

pub mod block;
pub mod encoder;
pub mod lfsr;

pub use block::{
    crp_memory_bits, dense_memory_bits, generate_block, materialize, BlockStream, CrpBlock, CrpConfig, BLOCK_SIDE,
};
pub use encoder::{encode, required_bits, CrpEncoder, Hypervector};
pub use lfsr::{lfsr_jump, lfsr_next, PERIOD};

//! Hyperdimensional class memory: aggregation, quantization and L1 inference.

mod fslh;
mod infer;
mod memory;
mod train;

pub use fslh::{decode_fslh, encode_fslh, load_fslh, save_fslh, FSLH_MAGIC, FSLH_VERSION};
pub use infer::{argmin, infer, knn_l1_baseline, Prediction};
pub use memory::{
    footprint_bits, BranchTable, ClassMemory, ClassSums, ClassVector, CLASS_MEMORY_BUDGET_BITS, MAX_CLASSES,
    MIN_CLASSES,
};
pub use train::{batched_sums, single_pass_sums, train_batched, train_single_pass};

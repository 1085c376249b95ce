//! Tensor container, bf16 rounding and feature quantization.

pub mod bf16;
pub mod bitstream;
pub mod fslt;
pub mod quant;
pub mod tensor;

pub use bf16::{bf16_bits_to_f32, bf16_round, f32_to_bf16_bits, is_bf16_exact};
pub use fslt::{decode_fslt, encode_fslt, load_fslt, read_fslt, save_fslt, write_fslt};
pub use quant::{dequantize_values, quantize_features, quantize_values, QuantParams};
pub use tensor::{pack_u4, unpack_u4, DType, Tensor, TensorData};

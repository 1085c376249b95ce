//! The `FSLM` model container.
//!
//! Layout (little-endian): magic `FSLM`, version byte, input `C, H, W` as
//! u32, u32 layer count, then one tagged record per layer:
//!
//! | tag | layer            | body                                               |
//! |-----|------------------|----------------------------------------------------|
//! | 0   | dense conv       | u32 cout, cin, k, stride, padding; f32 weights     |
//! | 1   | clustered conv   | an embedded single-layer `FSLC` stream             |
//! | 2   | ReLU             |                                                    |
//! | 3   | max pool         | u32 k, stride                                      |
//! | 4   | global avg pool  |                                                    |
//! | 5   | block boundary   |                                                    |
//! | 6   | save residual    |                                                    |
//! | 7   | add residual     |                                                    |

use std::path::Path;

use crate::clustering::encode_fslc;
use crate::clustering::fslc::read_fslc;
use crate::error::{format_err, Result};
use crate::numerics::Tensor;
use crate::wire::{put_u32, Reader};

use super::model::{ConvWeights, Layer, ModelGraph};

pub const FSLM_MAGIC: [u8; 4] = *b"FSLM";
pub const FSLM_VERSION: u8 = 1;

pub fn encode_fslm(model: &ModelGraph) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&FSLM_MAGIC);
    out.push(FSLM_VERSION);
    for d in model.input_shape() {
        put_u32(&mut out, d);
    }
    put_u32(&mut out, model.layers().len());
    for layer in model.layers() {
        match layer {
            Layer::Conv(ConvWeights::Dense { weights, stride, padding }) => {
                out.push(0);
                let s = weights.shape();
                for v in [s[0], s[1], s[2], *stride, *padding] {
                    put_u32(&mut out, v);
                }
                out.extend_from_slice(&weights.payload_bytes());
            }
            Layer::Conv(ConvWeights::Clustered(l)) => {
                out.push(1);
                out.extend_from_slice(&encode_fslc(std::slice::from_ref(l)));
            }
            Layer::Relu => out.push(2),
            Layer::MaxPool { k, stride } => {
                out.push(3);
                put_u32(&mut out, *k);
                put_u32(&mut out, *stride);
            }
            Layer::AvgPoolGlobal => out.push(4),
            Layer::BlockBoundary => out.push(5),
            Layer::SaveResidual => out.push(6),
            Layer::AddResidual => out.push(7),
        }
    }
    out
}

pub fn decode_fslm(bytes: &[u8]) -> Result<ModelGraph> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != FSLM_MAGIC {
        return Err(format_err!("not an FSLM stream"));
    }
    let version = r.u8()?;
    if version != FSLM_VERSION {
        return Err(format_err!("unsupported FSLM version {version}"));
    }
    let input = [r.usize()?, r.usize()?, r.usize()?];
    let count = r.usize()?;
    let mut layers = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let layer = match r.u8()? {
            0 => {
                let [cout, cin, k, stride, padding] = [r.usize()?, r.usize()?, r.usize()?, r.usize()?, r.usize()?];
                let n = cout * cin * k * k;
                let weights = Tensor::from_payload(crate::numerics::DType::F32, vec![cout, cin, k, k], r.take(4 * n)?)?;
                Layer::Conv(ConvWeights::Dense { weights, stride, padding })
            }
            1 => {
                let mut section = read_fslc(&mut r)?;
                if section.len() != 1 {
                    return Err(format_err!("clustered conv section must hold one layer, got {}", section.len()));
                }
                Layer::Conv(ConvWeights::Clustered(section.remove(0)))
            }
            2 => Layer::Relu,
            3 => Layer::MaxPool { k: r.usize()?, stride: r.usize()? },
            4 => Layer::AvgPoolGlobal,
            5 => Layer::BlockBoundary,
            6 => Layer::SaveResidual,
            7 => Layer::AddResidual,
            tag => return Err(format_err!("unknown FSLM layer tag {tag}")),
        };
        layers.push(layer);
    }
    if !r.is_empty() {
        return Err(format_err!("trailing bytes after FSLM layers"));
    }
    ModelGraph::new(input, layers).map_err(|e| format_err!("invalid model: {e}"))
}

pub fn save_fslm(path: impl AsRef<Path>, model: &ModelGraph) -> Result<()> {
    std::fs::write(path, encode_fslm(model))?;
    Ok(())
}

pub fn load_fslm(path: impl AsRef<Path>) -> Result<ModelGraph> {
    decode_fslm(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extractor::bundled::{bundled_model, BUNDLED_SEED};

    #[test]
    fn round_trips_dense_and_clustered() {
        let dense = bundled_model(BUNDLED_SEED);
        assert_eq!(decode_fslm(&encode_fslm(&dense)).unwrap(), dense);
        let clustered = dense.clustered(64, 16, 3).unwrap();
        assert_eq!(decode_fslm(&encode_fslm(&clustered)).unwrap(), clustered);
    }

    #[test]
    fn rejects_bad_tags_and_truncation() {
        let bytes = encode_fslm(&bundled_model(1));
        assert!(decode_fslm(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(decode_fslm(&bad).is_err());
    }
}

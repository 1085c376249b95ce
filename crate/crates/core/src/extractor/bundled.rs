//! A small four-block residual CNN used for desk-scale experiments.
//!
//! Input is `[3, 16, 16]`. Each block is `conv → ReLU → (save) → conv → (add)
//! → ReLU` with 3x3 kernels; blocks 2 to 4 open with a 2x2 max pool. Channel
//! widths are 16, 32, 64, 64, so branch features have those dimensions. The
//! weights are seeded He-normal draws and never trained.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::numerics::Tensor;

use super::model::{ConvWeights, Layer, ModelGraph};

pub const BUNDLED_INPUT: [usize; 3] = [3, 16, 16];
pub const BUNDLED_WIDTHS: [usize; 4] = [16, 32, 64, 64];
pub const BUNDLED_SEED: u64 = 0x5EED_F51D;

fn he_conv(rng: &mut ChaCha8Rng, cout: usize, cin: usize) -> Layer {
    let fan_in = (cin * 9) as f32;
    let normal = Normal::new(0.0f32, (2.0 / fan_in).sqrt()).unwrap();
    let w = (0..cout * cin * 9).map(|_| normal.sample(rng)).collect();
    Layer::Conv(ConvWeights::Dense {
        weights: Tensor::from_f32(vec![cout, cin, 3, 3], w).unwrap(),
        stride: 1,
        padding: 1,
    })
}

/// Builds the dense bundled model from `seed`.
pub fn bundled_model(seed: u64) -> ModelGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    let mut cin = BUNDLED_INPUT[0];
    for (b, &width) in BUNDLED_WIDTHS.iter().enumerate() {
        if b > 0 {
            layers.push(Layer::BlockBoundary);
            layers.push(Layer::MaxPool { k: 2, stride: 2 });
        }
        layers.push(he_conv(&mut rng, width, cin));
        layers.push(Layer::Relu);
        layers.push(Layer::SaveResidual);
        layers.push(he_conv(&mut rng, width, width));
        layers.push(Layer::AddResidual);
        layers.push(Layer::Relu);
        cin = width;
    }
    ModelGraph::new(BUNDLED_INPUT, layers).expect("bundled topology is consistent")
}

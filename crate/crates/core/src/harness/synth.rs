//! Seeded synthetic benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numerics::Tensor;

use super::dataset::FeatureDataset;

/// Gaussian class clusters in a nonnegative feature space.
///
/// Each class mean is `base + (separation · sigma / 2) · s` for a random sign
/// vector `s`, so two class means differ by `separation · sigma` in about half
/// of the coordinates. Samples add `sigma · N(0, 1)` noise and are clamped at
/// zero, like post-ReLU activations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub n_classes: usize,
    pub per_class: usize,
    pub feature_dim: usize,
    pub separation: f64,
    pub sigma: f64,
    pub base: f64,
    pub seed: u64,
}

impl Default for GaussianSpec {
    fn default() -> Self {
        Self { n_classes: 20, per_class: 30, feature_dim: 256, separation: 1.0, sigma: 1.0, base: 8.0, seed: 0 }
    }
}

pub fn synthetic_gaussian(spec: &GaussianSpec) -> Result<FeatureDataset> {
    if spec.n_classes == 0 || spec.per_class == 0 || spec.feature_dim == 0 {
        return Err(invalid!("synthetic dataset needs positive class count, samples and dimension"));
    }
    if !(spec.sigma.is_finite() && spec.sigma > 0.0 && spec.separation.is_finite() && spec.separation >= 0.0) {
        return Err(invalid!("sigma must be positive and separation nonnegative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let half = spec.separation * spec.sigma / 2.0;
    let means: Vec<Vec<f64>> = (0..spec.n_classes)
        .map(|_| (0..spec.feature_dim).map(|_| spec.base + if rng.random::<bool>() { half } else { -half }).collect())
        .collect();
    let mut data = Vec::with_capacity(spec.n_classes * spec.per_class * spec.feature_dim);
    let mut labels = Vec::with_capacity(spec.n_classes * spec.per_class);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..spec.per_class {
            for &m in mean {
                let z: f64 = StandardNormal.sample(&mut rng);
                data.push((m + spec.sigma * z).max(0.0) as f32);
            }
            labels.push(c);
        }
    }
    let t = Tensor::from_f32(vec![labels.len(), spec.feature_dim], data)?;
    let provenance = format!(
        "synthetic gaussian: {} classes x {} samples, F={}, separation={} sigma={} base={} seed={}",
        spec.n_classes, spec.per_class, spec.feature_dim, spec.separation, spec.sigma, spec.base, spec.seed
    );
    FeatureDataset::new(t, labels, provenance)
}

/// Noisy copies of per-class prototype images.
///
/// A prototype has a per-channel base level in `[0.2, 0.8)` plus a 4x4 grid
/// of `±contrast` patches. Samples add `noise · N(0, 1)` per pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageSpec {
    pub n_classes: usize,
    pub per_class: usize,
    pub shape: [usize; 3],
    pub contrast: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for ImageSpec {
    fn default() -> Self {
        Self {
            n_classes: 20,
            per_class: 20,
            shape: crate::extractor::BUNDLED_INPUT,
            contrast: 0.3,
            noise: 0.25,
            seed: 0,
        }
    }
}

pub fn synthetic_images(spec: &ImageSpec) -> Result<FeatureDataset> {
    let [c, h, w] = spec.shape;
    if spec.n_classes == 0 || spec.per_class == 0 || c * h * w == 0 {
        return Err(invalid!("synthetic images need positive class count, samples and shape"));
    }
    if !(spec.noise.is_finite() && spec.noise >= 0.0 && spec.contrast.is_finite()) {
        return Err(invalid!("noise must be nonnegative and contrast finite"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (ph, pw) = (h.div_ceil(4), w.div_ceil(4));
    let prototypes: Vec<Vec<f64>> = (0..spec.n_classes)
        .map(|_| {
            let levels: Vec<f64> = (0..c).map(|_| rng.random_range(0.2..0.8)).collect();
            let patches: Vec<f64> =
                (0..c * 16).map(|_| if rng.random::<bool>() { spec.contrast } else { -spec.contrast }).collect();
            let mut p = Vec::with_capacity(c * h * w);
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        p.push(levels[ch] + patches[ch * 16 + (y / ph) * 4 + x / pw]);
                    }
                }
            }
            p
        })
        .collect();
    let mut data = Vec::with_capacity(spec.n_classes * spec.per_class * c * h * w);
    let mut labels = Vec::new();
    for (class, proto) in prototypes.iter().enumerate() {
        for _ in 0..spec.per_class {
            for &v in proto {
                let z: f64 = StandardNormal.sample(&mut rng);
                data.push((v + spec.noise * z) as f32);
            }
            labels.push(class);
        }
    }
    let t = Tensor::from_f32(vec![labels.len(), c, h, w], data)?;
    let provenance = format!(
        "synthetic images: {} classes x {} samples, shape {:?}, contrast={} noise={} seed={}",
        spec.n_classes, spec.per_class, spec.shape, spec.contrast, spec.noise, spec.seed
    );
    FeatureDataset::new(t, labels, provenance)
}

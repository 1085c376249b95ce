use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, shape_err, Error, Result};
use crate::numerics::{bf16_round, is_bf16_exact, Tensor};

use super::kmeans::{kmeans_1d, nearest};

/// Largest supported codebook size.
pub const MAX_CENTROIDS: usize = 256;

/// A convolution layer compressed into per-group codebooks plus weight indices.
///
/// Every output channel owns one codebook per group of `ch_sub` consecutive
/// input channels. The final group may cover fewer channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredLayer {
    pub cout: usize,
    pub cin: usize,
    pub k: usize,
    pub ch_sub: usize,
    pub n_centroids: usize,
    /// `[cout][groups][n_centroids]`, every entry bf16-exact.
    pub codebooks: Vec<f32>,
    /// `[cout][cin][k][k]`, every entry `< n_centroids`.
    pub indices: Vec<u8>,
    pub stride: usize,
    pub padding: usize,
}

/// Clustering quality for a whole layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusteringStats {
    /// Sum of squared distances from each weight to its final codebook entry.
    pub objective: f64,
    pub weight_count: usize,
    pub max_iterations: usize,
}

impl ClusteringStats {
    pub fn mean_squared_error(&self) -> f64 {
        self.objective / self.weight_count as f64
    }
}

pub(crate) fn check_centroid_count(n: usize) -> Result<()> {
    if n == 0 || n > MAX_CENTROIDS || !n.is_power_of_two() {
        return Err(invalid!("centroid count must be a power of two in 1..={MAX_CENTROIDS}, got {n}"));
    }
    Ok(())
}

impl ClusteredLayer {
    /// Validates all structural invariants.
    pub fn validate(&self) -> Result<()> {
        check_centroid_count(self.n_centroids)?;
        if self.cout == 0 || self.cin == 0 || self.k == 0 || self.ch_sub == 0 || self.stride == 0 {
            return Err(invalid!("clustered layer dimensions must be positive"));
        }
        let expected_cb = self.cout * self.groups() * self.n_centroids;
        if self.codebooks.len() != expected_cb {
            return Err(shape_err!("{} codebook entries, expected {expected_cb}", self.codebooks.len()));
        }
        if self.indices.len() != self.weight_count() {
            return Err(shape_err!("{} indices, expected {}", self.indices.len(), self.weight_count()));
        }
        if let Some(i) = self.indices.iter().position(|&i| i as usize >= self.n_centroids) {
            return Err(invalid!("index {} at {i} exceeds codebook size {}", self.indices[i], self.n_centroids));
        }
        if self.codebooks.iter().any(|&c| !c.is_finite() || !is_bf16_exact(c)) {
            return Err(invalid!("codebook entries must be finite bf16 values"));
        }
        Ok(())
    }

    pub fn groups(&self) -> usize {
        self.cin.div_ceil(self.ch_sub)
    }

    pub fn weight_count(&self) -> usize {
        self.cout * self.cin * self.k * self.k
    }

    pub fn index_bits(&self) -> u32 {
        self.n_centroids.trailing_zeros()
    }

    pub fn group_of(&self, input_channel: usize) -> usize {
        input_channel / self.ch_sub
    }

    pub fn codebook(&self, out_channel: usize, group: usize) -> &[f32] {
        let start = (out_channel * self.groups() + group) * self.n_centroids;
        &self.codebooks[start..start + self.n_centroids]
    }

    /// Expands codebooks and indices back into a dense `[cout, cin, k, k]` weight tensor.
    pub fn reconstruct(&self) -> Tensor {
        let kk = self.k * self.k;
        let mut w = Vec::with_capacity(self.weight_count());
        for o in 0..self.cout {
            for i in 0..self.cin {
                let cb = self.codebook(o, self.group_of(i));
                let base = (o * self.cin + i) * kk;
                w.extend(self.indices[base..base + kk].iter().map(|&idx| cb[idx as usize]));
            }
        }
        Tensor::from_f32(vec![self.cout, self.cin, self.k, self.k], w).expect("shape is consistent")
    }
}

/// Free-function form of [`ClusteredLayer::reconstruct`].
pub fn reconstruct(layer: &ClusteredLayer) -> Tensor {
    layer.reconstruct()
}

fn group_rng(seed: u64, out_channel: usize, group: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((out_channel as u64) << 32) | group as u64);
    rng
}

/// Clusters a `[cout, cin, k, k]` weight tensor. See [`cluster_layer_with_stats`].
pub fn cluster_layer(
    weights: &Tensor,
    ch_sub: usize,
    n_centroids: usize,
    seed: u64,
    stride: usize,
    padding: usize,
) -> Result<ClusteredLayer> {
    cluster_layer_with_stats(weights, ch_sub, n_centroids, seed, stride, padding).map(|(l, _)| l)
}

/// Runs K-means independently for every (output channel, input-channel
/// group), rounds centroids to bf16 and points every weight at its nearest
/// rounded centroid. Deterministic in `(weights, ch_sub, n_centroids, seed)`
/// regardless of thread count.
pub fn cluster_layer_with_stats(
    weights: &Tensor,
    ch_sub: usize,
    n_centroids: usize,
    seed: u64,
    stride: usize,
    padding: usize,
) -> Result<(ClusteredLayer, ClusteringStats)> {
    let shape = weights.shape();
    if shape.len() != 4 || shape[2] != shape[3] {
        return Err(shape_err!("conv weights must be [cout, cin, k, k], got {shape:?}"));
    }
    let (cout, cin, k) = (shape[0], shape[1], shape[2]);
    let w = weights.as_f32().ok_or_else(|| invalid!("conv weights must be F32, got {:?}", weights.dtype()))?;
    if ch_sub == 0 {
        return Err(invalid!("ch_sub must be at least 1"));
    }
    if stride == 0 {
        return Err(invalid!("stride must be at least 1"));
    }
    check_centroid_count(n_centroids)?;
    if let Some(i) = w.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("weight {i} is {}", w[i])));
    }
    let kk = k * k;
    let groups = cin.div_ceil(ch_sub);
    let smallest_group = (cin - (groups - 1) * ch_sub) * kk;
    if n_centroids > smallest_group {
        return Err(invalid!("{n_centroids} centroids exceed the {smallest_group} weights of the smallest group"));
    }

    let jobs: Vec<(usize, usize)> = (0..cout).flat_map(|o| (0..groups).map(move |g| (o, g))).collect();
    let results: Vec<(Vec<f32>, Vec<u8>, f64, usize)> = jobs
        .par_iter()
        .map(|&(o, g)| {
            let c_lo = g * ch_sub;
            let c_hi = (c_lo + ch_sub).min(cin);
            let points: Vec<f64> = (c_lo..c_hi)
                .flat_map(|i| w[(o * cin + i) * kk..(o * cin + i + 1) * kk].iter().map(|&v| v as f64))
                .collect();
            let mut rng = group_rng(seed, o, g);
            let km = kmeans_1d(&points, n_centroids, &mut rng);
            let codebook: Vec<f32> = km.centroids.iter().map(|&c| bf16_round(c as f32)).collect();
            let cb64: Vec<f64> = codebook.iter().map(|&c| c as f64).collect();
            let mut sse = 0.0;
            let idx: Vec<u8> = points
                .iter()
                .map(|&x| {
                    let j = nearest(&cb64, x);
                    sse += (x - cb64[j]).powi(2);
                    j as u8
                })
                .collect();
            (codebook, idx, sse, km.iterations)
        })
        .collect();

    let mut codebooks = Vec::with_capacity(cout * groups * n_centroids);
    let mut indices = vec![0u8; cout * cin * kk];
    let mut objective = 0.0;
    let mut max_iterations = 0;
    for (&(o, g), (cb, idx, sse, iters)) in jobs.iter().zip(results) {
        codebooks.extend_from_slice(&cb);
        let start = (o * cin + g * ch_sub) * kk;
        indices[start..start + idx.len()].copy_from_slice(&idx);
        objective += sse;
        max_iterations = max_iterations.max(iters);
    }

    let layer = ClusteredLayer { cout, cin, k, ch_sub, n_centroids, codebooks, indices, stride, padding };
    let stats = ClusteringStats { objective, weight_count: w.len(), max_iterations };
    Ok((layer, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_weights(shape: [usize; 4], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::from_f32(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect()).unwrap()
    }

    #[test]
    fn constant_weights_reconstruct_exactly() {
        let w = Tensor::from_f32(vec![2, 4, 3, 3], vec![0.5; 72]).unwrap();
        for n in [1, 2, 4, 8] {
            let layer = cluster_layer(&w, 2, n, 11, 1, 1).unwrap();
            for &i in &layer.indices {
                assert_eq!(layer.codebook(0, 0)[i as usize], 0.5);
            }
            assert_eq!(layer.reconstruct(), w);
        }
    }

    #[test]
    fn pair_merges_to_mean() {
        // One output channel, one input channel, 1x1 kernel would leave a
        // single weight, so use a 2-channel group with two 1x1 weights.
        let w = Tensor::from_f32(vec![1, 2, 1, 1], vec![0.9, 0.7]).unwrap();
        let layer = cluster_layer(&w, 2, 1, 0, 1, 0).unwrap();
        assert_eq!(layer.codebooks, vec![bf16_round(0.8)]);
        assert_eq!(layer.indices, vec![0, 0]);
        let r = layer.reconstruct();
        assert_eq!(r.as_f32().unwrap(), &[bf16_round(0.8), bf16_round(0.8)]);
    }

    #[test]
    fn two_groups_of_two_values() {
        let w = Tensor::from_f32(vec![1, 8, 1, 1], vec![0., 0., 1., 1., 2., 2., 3., 3.]).unwrap();
        let layer = cluster_layer(&w, 4, 2, 5, 1, 0).unwrap();
        let mut g0 = layer.codebook(0, 0).to_vec();
        let mut g1 = layer.codebook(0, 1).to_vec();
        g0.sort_by(f32::total_cmp);
        g1.sort_by(f32::total_cmp);
        assert_eq!(g0, vec![0.0, 1.0]);
        assert_eq!(g1, vec![2.0, 3.0]);
        assert_eq!(layer.reconstruct(), w);
    }

    #[test]
    fn one_centroid_per_weight_is_lossless_up_to_bf16() {
        let w = Tensor::from_f32(vec![1, 1, 2, 2], vec![0.1, -0.25, 0.7, 0.33]).unwrap();
        let layer = cluster_layer(&w, 1, 4, 9, 1, 0).unwrap();
        let expected: Vec<f32> = w.as_f32().unwrap().iter().map(|&v| bf16_round(v)).collect();
        assert_eq!(layer.reconstruct().as_f32().unwrap(), expected.as_slice());
    }

    #[test]
    fn reconstruction_error_matches_within_cluster_spread() {
        let w = random_weights([4, 4, 3, 3], 21);
        let (layer, stats) = cluster_layer_with_stats(&w, 4, 4, 2, 1, 1).unwrap();
        // Independent oracle: per (channel, group), the spread of each cluster
        // around its mean plus the shift from the mean to the stored centroid.
        let wv = w.as_f32().unwrap();
        let mut oracle = 0.0f64;
        for o in 0..4 {
            let mut members: Vec<Vec<f64>> = vec![Vec::new(); 4];
            for i in 0..4 * 9 {
                members[layer.indices[o * 36 + i] as usize].push(wv[o * 36 + i] as f64);
            }
            for (j, m) in members.iter().enumerate() {
                if m.is_empty() {
                    continue;
                }
                let mean = m.iter().sum::<f64>() / m.len() as f64;
                let var: f64 = m.iter().map(|x| (x - mean).powi(2)).sum();
                let shift = mean - layer.codebook(o, 0)[j] as f64;
                oracle += var + m.len() as f64 * shift * shift;
            }
        }
        let recon = layer.reconstruct();
        let mse: f64 =
            recon.as_f32().unwrap().iter().zip(wv).map(|(&a, &b)| (a as f64 - b as f64).powi(2)).sum::<f64>()
                / wv.len() as f64;
        assert!((oracle / 144.0 - mse).abs() < 1e-12);
        assert!((stats.mean_squared_error() - mse).abs() < 1e-12);
    }

    #[test]
    fn deterministic_across_thread_pools() {
        let w = random_weights([8, 16, 3, 3], 4);
        let a = cluster_layer(&w, 4, 8, 77, 1, 1).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| cluster_layer(&w, 4, 8, 77, 1, 1).unwrap());
        assert_eq!(a, b);
        a.validate().unwrap();
    }

    #[test]
    fn partial_last_group_gets_its_own_codebook() {
        let w = random_weights([2, 5, 3, 3], 8);
        let layer = cluster_layer(&w, 2, 4, 1, 1, 1).unwrap();
        assert_eq!(layer.groups(), 3);
        assert_eq!(layer.codebooks.len(), 2 * 3 * 4);
        layer.validate().unwrap();
    }

    #[test]
    fn rejects_invalid_requests() {
        let w = random_weights([1, 1, 3, 3], 0);
        assert!(cluster_layer(&w, 1, 16, 0, 1, 0).is_err());
        assert!(cluster_layer(&w, 1, 3, 0, 1, 0).is_err());
        assert!(cluster_layer(&w, 0, 2, 0, 1, 0).is_err());
        let bad = Tensor::from_f32(vec![1, 1, 1, 2], vec![f32::NAN, 1.0]).unwrap();
        assert!(matches!(cluster_layer(&bad, 1, 1, 0, 1, 0), Err(Error::ShapeMismatch(_))));
        let nan = Tensor::from_f32(vec![1, 1, 1, 1], vec![f32::NAN]).unwrap();
        assert!(matches!(cluster_layer(&nan, 1, 1, 0, 1, 0), Err(Error::NonFinite(_))));
    }
}

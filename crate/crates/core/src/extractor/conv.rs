//! Convolution kernels on `[C, H, W]` activations.

use crate::clustering::ClusteredLayer;
use crate::error::{invalid, shape_err, Result};
use crate::numerics::{bf16_round, Tensor};

use super::ops::OpCounts;

/// How the clustered path accumulates activations into index bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Accumulation {
    /// Activations and bin sums are rounded to bf16 after every add.
    #[default]
    Bf16,
    /// Plain `f32` bins, for isolating algorithmic from numeric error.
    F32,
}

/// Borrowed view of a `[C, H, W]` activation.
#[derive(Debug, Clone, Copy)]
pub(crate) struct MapView<'a> {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: &'a [f32],
}

impl<'a> MapView<'a> {
    pub fn of(t: &'a Tensor) -> Result<Self> {
        let data = t.as_f32().ok_or_else(|| invalid!("activations must be F32, got {:?}", t.dtype()))?;
        match *t.shape() {
            [c, h, w] => Ok(Self { c, h, w, data }),
            ref s => Err(shape_err!("activations must be [C, H, W], got {s:?}")),
        }
    }

    #[inline]
    fn at(&self, c: usize, y: isize, x: isize) -> Option<f32> {
        if y < 0 || x < 0 || y as usize >= self.h || x as usize >= self.w {
            None
        } else {
            Some(self.data[(c * self.h + y as usize) * self.w + x as usize])
        }
    }
}

pub(crate) fn output_side(input: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 {
        return Err(invalid!("stride must be positive"));
    }
    let padded = input + 2 * pad;
    if padded < k {
        return Err(shape_err!("kernel {k} larger than padded input {padded}"));
    }
    Ok((padded - k) / stride + 1)
}

/// Cross-correlation with zero padding, accumulating in `f32` over
/// (input channel, kernel row, kernel column). Weights are `[cout, cin, k, k]`.
pub fn conv_direct(input: &Tensor, weights: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    conv_direct_counted(input, weights, stride, pad, &mut OpCounts::default())
}

pub(crate) fn conv_direct_counted(
    input: &Tensor,
    weights: &Tensor,
    stride: usize,
    pad: usize,
    ops: &mut OpCounts,
) -> Result<Tensor> {
    let x = MapView::of(input)?;
    let w = weights.as_f32().ok_or_else(|| invalid!("conv weights must be F32"))?;
    let (cout, cin, k) = match *weights.shape() {
        [o, i, kh, kw] if kh == kw => (o, i, kh),
        ref s => return Err(shape_err!("conv weights must be [cout, cin, k, k], got {s:?}")),
    };
    if cin != x.c {
        return Err(shape_err!("input has {} channels, weights expect {cin}", x.c));
    }
    let oh = output_side(x.h, k, stride, pad)?;
    let ow = output_side(x.w, k, stride, pad)?;
    let mut out = vec![0.0f32; cout * oh * ow];
    for o in 0..cout {
        let wo = &w[o * cin * k * k..(o + 1) * cin * k * k];
        for oy in 0..oh {
            for ox in 0..ow {
                let y0 = (oy * stride) as isize - pad as isize;
                let x0 = (ox * stride) as isize - pad as isize;
                let mut acc = 0.0f32;
                for i in 0..cin {
                    for ky in 0..k {
                        for kx in 0..k {
                            if let Some(v) = x.at(i, y0 + ky as isize, x0 + kx as isize) {
                                acc += wo[(i * k + ky) * k + kx] * v;
                            }
                        }
                    }
                }
                out[(o * oh + oy) * ow + ox] = acc;
            }
        }
    }
    let taps = (cin * k * k) as u64;
    let outputs = (cout * oh * ow) as u64;
    ops.multiplies += outputs * taps;
    ops.adds += outputs * (taps - 1);
    Tensor::from_f32(vec![cout, oh, ow], out)
}

/// Convolution with partial-sum reuse.
///
/// For every output value and every input-channel group, activations that
/// share a weight index are first summed into one of `N` bins; each bin is
/// then multiplied by its codebook centroid once. Stride and padding come
/// from the layer.
pub fn conv_clustered(input: &Tensor, layer: &ClusteredLayer, acc: Accumulation) -> Result<Tensor> {
    conv_clustered_counted(input, layer, acc, &mut OpCounts::default())
}

pub(crate) fn conv_clustered_counted(
    input: &Tensor,
    layer: &ClusteredLayer,
    acc: Accumulation,
    ops: &mut OpCounts,
) -> Result<Tensor> {
    let x = MapView::of(input)?;
    if x.c != layer.cin {
        return Err(shape_err!("input has {} channels, clustered layer expects {}", x.c, layer.cin));
    }
    let (k, stride, pad) = (layer.k, layer.stride, layer.padding);
    let oh = output_side(x.h, k, stride, pad)?;
    let ow = output_side(x.w, k, stride, pad)?;
    let n = layer.n_centroids;
    let groups = layer.groups();
    let round = |v: f32| match acc {
        Accumulation::Bf16 => bf16_round(v),
        Accumulation::F32 => v,
    };
    let xs: Vec<f32> = x.data.iter().map(|&v| round(v)).collect();
    let xv = MapView { data: &xs, ..x };

    let mut out = vec![0.0f32; layer.cout * oh * ow];
    let mut bins = vec![0.0f32; n];
    for o in 0..layer.cout {
        for oy in 0..oh {
            for ox in 0..ow {
                let y0 = (oy * stride) as isize - pad as isize;
                let x0 = (ox * stride) as isize - pad as isize;
                let mut total = 0.0f32;
                for g in 0..groups {
                    bins.iter_mut().for_each(|b| *b = 0.0);
                    let c_hi = ((g + 1) * layer.ch_sub).min(layer.cin);
                    for i in g * layer.ch_sub..c_hi {
                        let base = (o * layer.cin + i) * k * k;
                        for ky in 0..k {
                            for kx in 0..k {
                                if let Some(v) = xv.at(i, y0 + ky as isize, x0 + kx as isize) {
                                    let b = &mut bins[layer.indices[base + ky * k + kx] as usize];
                                    *b = round(*b + v);
                                }
                            }
                        }
                    }
                    let codebook = layer.codebook(o, g);
                    let mut partial = 0.0f32;
                    for (c, b) in codebook.iter().zip(&bins) {
                        partial += c * b;
                    }
                    total += partial;
                }
                out[(o * oh + oy) * ow + ox] = total;
            }
        }
    }
    let outputs = (layer.cout * oh * ow) as u64;
    let groups = groups as u64;
    ops.index_accumulates += outputs * (layer.cin * k * k) as u64;
    ops.multiplies += outputs * groups * n as u64;
    ops.adds += outputs * (groups * (n as u64 - 1) + (groups - 1));
    Tensor::from_f32(vec![layer.cout, oh, ow], out)
}

pub fn relu(t: &Tensor) -> Result<Tensor> {
    let x = MapView::of(t)?;
    Tensor::from_f32(t.shape().to_vec(), x.data.iter().map(|&v| v.max(0.0)).collect())
}

/// Max pooling without padding; trailing rows and columns that do not fill a window are dropped.
pub fn max_pool(t: &Tensor, k: usize, stride: usize) -> Result<Tensor> {
    let x = MapView::of(t)?;
    if k == 0 {
        return Err(invalid!("pool window must be positive"));
    }
    let oh = output_side(x.h, k, stride, 0)?;
    let ow = output_side(x.w, k, stride, 0)?;
    let mut out = Vec::with_capacity(x.c * oh * ow);
    for c in 0..x.c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut m = f32::NEG_INFINITY;
                for ky in 0..k {
                    for kx in 0..k {
                        m = m.max(x.data[(c * x.h + oy * stride + ky) * x.w + ox * stride + kx]);
                    }
                }
                out.push(m);
            }
        }
    }
    Tensor::from_f32(vec![x.c, oh, ow], out)
}

/// Per-channel spatial mean.
pub fn global_average(t: &Tensor) -> Result<Vec<f32>> {
    let x = MapView::of(t)?;
    let area = x.h * x.w;
    Ok((0..x.c)
        .map(|c| {
            let s: f64 = x.data[c * area..(c + 1) * area].iter().map(|&v| v as f64).sum();
            (s / area as f64) as f32
        })
        .collect())
}

pub fn elementwise_add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(shape_err!("cannot add {:?} and {:?}", a.shape(), b.shape()));
    }
    let (x, y) = (MapView::of(a)?, MapView::of(b)?);
    Tensor::from_f32(a.shape().to_vec(), x.data.iter().zip(y.data).map(|(p, q)| p + q).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::cluster_layer;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn map(c: usize, h: usize, w: usize, f: impl Fn(usize) -> f32) -> Tensor {
        Tensor::from_f32(vec![c, h, w], (0..c * h * w).map(f).collect()).unwrap()
    }

    #[test]
    fn delta_kernel_is_identity() {
        let x = map(1, 4, 5, |i| i as f32 * 0.5 - 3.0);
        let mut k = vec![0.0; 9];
        k[4] = 1.0;
        let w = Tensor::from_f32(vec![1, 1, 3, 3], k).unwrap();
        assert_eq!(conv_direct(&x, &w, 1, 1).unwrap(), x);
    }

    #[test]
    fn box_filter_by_hand() {
        let x = map(1, 4, 4, |_| 1.0);
        let w = Tensor::from_f32(vec![1, 1, 3, 3], vec![1.0; 9]).unwrap();
        let y = conv_direct(&x, &w, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2]);
        assert_eq!(y.as_f32().unwrap(), &[9.0; 4]);
        // With padding the corners see four taps and the edges six.
        let y = conv_direct(&x, &w, 1, 1).unwrap();
        assert_eq!(&y.as_f32().unwrap()[..4], &[4.0, 6.0, 6.0, 4.0]);
        let y = conv_direct(&x, &w, 2, 1).unwrap();
        assert_eq!(y.as_f32().unwrap(), &[4.0, 6.0, 6.0, 9.0]);
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let x = map(3, 5, 5, |_| 0.0);
        let w = Tensor::from_f32(vec![2, 3, 3, 3], (0..54).map(|i| i as f32).collect()).unwrap();
        let y = conv_direct(&x, &w, 1, 1).unwrap();
        assert!(y.as_f32().unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatches_are_rejected() {
        let x = map(2, 4, 4, |_| 1.0);
        let w = Tensor::from_f32(vec![1, 3, 3, 3], vec![0.0; 27]).unwrap();
        assert!(conv_direct(&x, &w, 1, 1).is_err());
        let w = Tensor::from_f32(vec![1, 2, 5, 5], vec![0.0; 50]).unwrap();
        let tiny = map(2, 2, 2, |_| 1.0);
        assert!(conv_direct(&tiny, &w, 1, 0).is_err());
    }

    #[test]
    fn bins_collect_activations_sharing_an_index() {
        // One 3x3 window; I2, I4, I5 (1-based, row-major) share code 1.
        let mut indices = vec![0u8; 9];
        for pos in [1, 3, 4] {
            indices[pos] = 1;
        }
        for (pos, code) in [(0, 0), (2, 2), (5, 3), (6, 0), (7, 2), (8, 3)] {
            indices[pos] = code;
        }
        let layer = ClusteredLayer {
            cout: 1,
            cin: 1,
            k: 3,
            ch_sub: 1,
            n_centroids: 4,
            codebooks: vec![0.0, 1.0, 0.0, 0.0],
            indices,
            stride: 1,
            padding: 0,
        };
        let x = map(1, 3, 3, |i| (i + 1) as f32);
        let y = conv_clustered(&x, &layer, Accumulation::F32).unwrap();
        // Only code 1 has a nonzero centroid, so the output is its bin: I2 + I4 + I5.
        assert_eq!(y.as_f32().unwrap(), &[2.0 + 4.0 + 5.0]);
    }

    #[test]
    fn one_weight_per_code_matches_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = Tensor::from_f32(vec![2, 1, 2, 2], (0..8).map(|_| rng.random_range(-1.0f32..1.0)).collect()).unwrap();
        let layer = cluster_layer(&w, 1, 4, 0, 1, 1).unwrap();
        let x = map(1, 5, 5, |i| ((i * 7) % 5) as f32 - 2.0);
        let a = conv_clustered(&x, &layer, Accumulation::F32).unwrap();
        let b = conv_direct(&x, &layer.reconstruct(), 1, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn op_counters_follow_formulas() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = Tensor::from_f32(vec![4, 8, 3, 3], (0..288).map(|_| rng.random_range(-1.0f32..1.0)).collect()).unwrap();
        let layer = cluster_layer(&w, 4, 4, 0, 1, 1).unwrap();
        let x = map(8, 6, 6, |i| i as f32 / 100.0);
        let mut direct = OpCounts::default();
        let mut clustered = OpCounts::default();
        conv_direct_counted(&x, &layer.reconstruct(), 1, 1, &mut direct).unwrap();
        conv_clustered_counted(&x, &layer, Accumulation::Bf16, &mut clustered).unwrap();
        let outputs = 4 * 36;
        assert_eq!(direct.multiplies, outputs * 8 * 9);
        assert_eq!(direct.adds, outputs * (8 * 9 - 1));
        assert_eq!(clustered.multiplies, outputs * 2 * 4);
        assert_eq!(clustered.index_accumulates, outputs * 8 * 9);
        assert_eq!(clustered.adds, outputs * (2 * 3 + 1));
    }

    #[test]
    fn pooling() {
        let x = map(1, 4, 4, |i| i as f32);
        let p = max_pool(&x, 2, 2).unwrap();
        assert_eq!(p.as_f32().unwrap(), &[5.0, 7.0, 13.0, 15.0]);
        assert_eq!(global_average(&x).unwrap(), vec![7.5]);
        let r = relu(&map(1, 1, 3, |i| i as f32 - 1.0)).unwrap();
        assert_eq!(r.as_f32().unwrap(), &[0.0, 0.0, 1.0]);
    }
}

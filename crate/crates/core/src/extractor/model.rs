use crate::clustering::{cluster_layer, ClusteredLayer};
use crate::error::{invalid, shape_err, Result};
use crate::numerics::Tensor;

use super::conv::output_side;

/// Weights of one convolution, either dense or clustered.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvWeights {
    Dense { weights: Tensor, stride: usize, padding: usize },
    Clustered(ClusteredLayer),
}

impl ConvWeights {
    /// `(cout, cin, k)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        match self {
            ConvWeights::Dense { weights, .. } => {
                let s = weights.shape();
                (s[0], s[1], s[2])
            }
            ConvWeights::Clustered(l) => (l.cout, l.cin, l.k),
        }
    }

    pub fn stride(&self) -> usize {
        match self {
            ConvWeights::Dense { stride, .. } => *stride,
            ConvWeights::Clustered(l) => l.stride,
        }
    }

    pub fn padding(&self) -> usize {
        match self {
            ConvWeights::Dense { padding, .. } => *padding,
            ConvWeights::Clustered(l) => l.padding,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ConvWeights::Dense { weights, stride, .. } => {
                let s = weights.shape();
                if s.len() != 4 || s[2] != s[3] {
                    return Err(shape_err!("conv weights must be [cout, cin, k, k], got {s:?}"));
                }
                if weights.as_f32().is_none() {
                    return Err(invalid!("dense conv weights must be F32"));
                }
                if *stride == 0 {
                    return Err(invalid!("stride must be positive"));
                }
                Ok(())
            }
            ConvWeights::Clustered(l) => l.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv(ConvWeights),
    Relu,
    MaxPool {
        k: usize,
        stride: usize,
    },
    AvgPoolGlobal,
    /// Ends a block; the activation at this point is a branch output.
    BlockBoundary,
    /// Pushes the current activation for a later [`Layer::AddResidual`].
    SaveResidual,
    /// Pops the most recently saved activation and adds it elementwise.
    AddResidual,
}

/// An ordered layer list over a `[C, H, W]` input, partitioned into blocks by
/// [`Layer::BlockBoundary`] markers.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    input_shape: [usize; 3],
    layers: Vec<Layer>,
}

impl ModelGraph {
    pub fn new(input_shape: [usize; 3], layers: Vec<Layer>) -> Result<Self> {
        let m = Self { input_shape, layers };
        m.shapes()?;
        Ok(m)
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Activation shape after every layer. Validates the whole graph.
    pub fn shapes(&self) -> Result<Vec<[usize; 3]>> {
        if self.input_shape.contains(&0) {
            return Err(invalid!("input shape must be positive, got {:?}", self.input_shape));
        }
        if self.layers.is_empty() {
            return Err(invalid!("model has no layers"));
        }
        let mut shape = self.input_shape;
        let mut stack: Vec<[usize; 3]> = Vec::new();
        let mut out = Vec::with_capacity(self.layers.len());
        let mut block_len = 0usize;
        for (i, layer) in self.layers.iter().enumerate() {
            shape = match layer {
                Layer::Conv(cw) => {
                    cw.validate()?;
                    let (cout, cin, k) = cw.dims();
                    if cin != shape[0] {
                        return Err(shape_err!("layer {i}: conv expects {cin} channels, got {}", shape[0]));
                    }
                    [
                        cout,
                        output_side(shape[1], k, cw.stride(), cw.padding())?,
                        output_side(shape[2], k, cw.stride(), cw.padding())?,
                    ]
                }
                Layer::Relu => shape,
                Layer::MaxPool { k, stride } => {
                    if *k == 0 {
                        return Err(invalid!("layer {i}: pool window must be positive"));
                    }
                    [shape[0], output_side(shape[1], *k, *stride, 0)?, output_side(shape[2], *k, *stride, 0)?]
                }
                Layer::AvgPoolGlobal => [shape[0], 1, 1],
                Layer::BlockBoundary => {
                    if block_len == 0 {
                        return Err(invalid!("layer {i}: empty block"));
                    }
                    block_len = 0;
                    out.push(shape);
                    continue;
                }
                Layer::SaveResidual => {
                    stack.push(shape);
                    shape
                }
                Layer::AddResidual => {
                    let saved = stack.pop().ok_or_else(|| invalid!("layer {i}: no saved residual"))?;
                    if saved != shape {
                        return Err(shape_err!("layer {i}: residual {saved:?} vs activation {shape:?}"));
                    }
                    shape
                }
            };
            block_len += 1;
            out.push(shape);
        }
        if block_len == 0 {
            return Err(invalid!("model must not end with a block boundary"));
        }
        if !stack.is_empty() {
            return Err(invalid!("{} saved residuals never consumed", stack.len()));
        }
        Ok(out)
    }

    pub fn block_count(&self) -> usize {
        1 + self.layers.iter().filter(|l| matches!(l, Layer::BlockBoundary)).count()
    }

    pub fn conv_layer_count(&self) -> usize {
        self.layers.iter().filter(|l| matches!(l, Layer::Conv(_))).count()
    }

    pub fn conv_layers_per_block(&self) -> Vec<usize> {
        let mut counts = vec![0usize];
        for l in &self.layers {
            match l {
                Layer::BlockBoundary => counts.push(0),
                Layer::Conv(_) => *counts.last_mut().unwrap() += 1,
                _ => {}
            }
        }
        counts
    }

    /// Channel width of each branch feature, one per block.
    pub fn branch_dims(&self) -> Vec<usize> {
        let shapes = self.shapes().expect("validated on construction");
        let mut dims: Vec<usize> = self
            .layers
            .iter()
            .zip(&shapes)
            .filter(|(l, _)| matches!(l, Layer::BlockBoundary))
            .map(|(_, s)| s[0])
            .collect();
        dims.push(shapes.last().unwrap()[0]);
        dims
    }

    /// Replaces every dense convolution with its clustered form. Layer `i`
    /// uses seed `seed + i` so layers cluster independently.
    pub fn clustered(&self, ch_sub: usize, n_centroids: usize, seed: u64) -> Result<Self> {
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| match l {
                Layer::Conv(ConvWeights::Dense { weights, stride, padding }) => {
                    let c =
                        cluster_layer(weights, ch_sub, n_centroids, seed.wrapping_add(i as u64), *stride, *padding)?;
                    Ok(Layer::Conv(ConvWeights::Clustered(c)))
                }
                other => Ok(other.clone()),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.input_shape, layers)
    }

    /// Replaces every clustered convolution with its reconstructed dense weights.
    pub fn densified(&self) -> Self {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Conv(ConvWeights::Clustered(c)) => {
                    Layer::Conv(ConvWeights::Dense { weights: c.reconstruct(), stride: c.stride, padding: c.padding })
                }
                other => other.clone(),
            })
            .collect();
        Self { input_shape: self.input_shape, layers }
    }

    /// Applies `f` to every dense weight tensor (e.g. fake quantization).
    pub fn map_dense_weights(&self, mut f: impl FnMut(&[f32]) -> Vec<f32>) -> Result<Self> {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Conv(ConvWeights::Dense { weights, stride, padding }) => {
                    let w = Tensor::from_f32(weights.shape().to_vec(), f(weights.as_f32().unwrap()))?;
                    Ok(Layer::Conv(ConvWeights::Dense { weights: w, stride: *stride, padding: *padding }))
                }
                other => Ok(other.clone()),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.input_shape, layers)
    }
}

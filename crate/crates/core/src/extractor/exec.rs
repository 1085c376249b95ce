//! Block-by-block model execution with branch features.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::numerics::Tensor;

use super::conv::{
    conv_clustered_counted, conv_direct_counted, elementwise_add, global_average, max_pool, relu, Accumulation,
};
use super::model::{ConvWeights, Layer, ModelGraph};
use super::ops::OpCounts;

/// Which arithmetic runs clustered convolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecMode {
    /// Dense multiply-accumulate on reconstructed weights.
    Direct,
    /// Partial-sum reuse over weight-index bins.
    #[default]
    Clustered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    pub mode: ExecMode,
    pub accumulation: Accumulation,
}

impl RunOptions {
    pub fn new(mode: ExecMode) -> Self {
        Self { mode, accumulation: Accumulation::default() }
    }
}

/// Global average of one block's output.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchFeature {
    /// Zero-based block index.
    pub block: usize,
    pub values: Vec<f32>,
}

impl BranchFeature {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Result of running a whole model on one input.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelRun {
    pub branches: Vec<BranchFeature>,
    pub ops: OpCounts,
    pub conv_layers: usize,
}

/// Steps through a model one block at a time so callers can stop early.
pub struct BlockExecutor<'m> {
    model: &'m ModelGraph,
    options: RunOptions,
    act: Tensor,
    pos: usize,
    block: usize,
    residuals: Vec<Tensor>,
    ops: OpCounts,
    conv_layers: usize,
}

impl<'m> BlockExecutor<'m> {
    pub fn new(model: &'m ModelGraph, input: &Tensor, options: RunOptions) -> Result<Self> {
        if input.shape() != model.input_shape() {
            return Err(shape_err!("input {:?} does not match model input {:?}", input.shape(), model.input_shape()));
        }
        if input.as_f32().is_none() {
            return Err(shape_err!("model input must be F32"));
        }
        Ok(Self {
            model,
            options,
            act: input.clone(),
            pos: 0,
            block: 0,
            residuals: Vec::new(),
            ops: OpCounts::default(),
            conv_layers: 0,
        })
    }

    pub fn ops(&self) -> OpCounts {
        self.ops
    }

    /// Convolution layers executed so far.
    pub fn conv_layers(&self) -> usize {
        self.conv_layers
    }

    pub fn is_done(&self) -> bool {
        self.pos >= self.model.layers().len()
    }

    fn apply(&mut self, layer: &Layer) -> Result<()> {
        self.act = match layer {
            Layer::Conv(cw) => {
                self.conv_layers += 1;
                match (cw, self.options.mode) {
                    (ConvWeights::Dense { weights, stride, padding }, _) => {
                        conv_direct_counted(&self.act, weights, *stride, *padding, &mut self.ops)?
                    }
                    (ConvWeights::Clustered(l), ExecMode::Direct) => {
                        conv_direct_counted(&self.act, &l.reconstruct(), l.stride, l.padding, &mut self.ops)?
                    }
                    (ConvWeights::Clustered(l), ExecMode::Clustered) => {
                        conv_clustered_counted(&self.act, l, self.options.accumulation, &mut self.ops)?
                    }
                }
            }
            Layer::Relu => relu(&self.act)?,
            Layer::MaxPool { k, stride } => max_pool(&self.act, *k, *stride)?,
            Layer::AvgPoolGlobal => {
                let c = self.act.shape()[0];
                self.ops.auxiliary += (self.act.numel() + c) as u64;
                Tensor::from_f32(vec![c, 1, 1], global_average(&self.act)?)?
            }
            Layer::BlockBoundary => unreachable!("handled by next_block"),
            Layer::SaveResidual => {
                self.residuals.push(self.act.clone());
                return Ok(());
            }
            Layer::AddResidual => {
                let saved = self.residuals.pop().expect("graph validated");
                self.ops.auxiliary += saved.numel() as u64;
                elementwise_add(&self.act, &saved)?
            }
        };
        Ok(())
    }

    /// Runs the next block and returns its branch feature, or `None` when
    /// every block has run.
    pub fn next_block(&mut self) -> Result<Option<BranchFeature>> {
        let layers = self.model.layers();
        if self.pos >= layers.len() {
            return Ok(None);
        }
        while self.pos < layers.len() {
            let layer = &layers[self.pos];
            self.pos += 1;
            if matches!(layer, Layer::BlockBoundary) {
                break;
            }
            self.apply(layer)?;
        }
        let values = global_average(&self.act)?;
        self.ops.auxiliary += (self.act.numel() + values.len()) as u64;
        let feature = BranchFeature { block: self.block, values };
        self.block += 1;
        Ok(Some(feature))
    }
}

/// Runs every layer and collects one branch feature per block.
pub fn run_model(model: &ModelGraph, input: &Tensor, options: RunOptions) -> Result<ModelRun> {
    let mut exec = BlockExecutor::new(model, input, options)?;
    let mut branches = Vec::with_capacity(model.block_count());
    while let Some(b) = exec.next_block()? {
        branches.push(b);
    }
    Ok(ModelRun { branches, ops: exec.ops(), conv_layers: exec.conv_layers() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(cout: usize, cin: usize, w: impl Fn(usize) -> f32) -> Layer {
        let n = cout * cin * 9;
        Layer::Conv(ConvWeights::Dense {
            weights: Tensor::from_f32(vec![cout, cin, 3, 3], (0..n).map(w).collect()).unwrap(),
            stride: 1,
            padding: 1,
        })
    }

    #[test]
    fn single_block_is_global_average_of_output() {
        let m = ModelGraph::new([1, 4, 4], vec![dense(2, 1, |i| i as f32 / 10.0), Layer::Relu]).unwrap();
        let x = Tensor::from_f32(vec![1, 4, 4], (0..16).map(|i| i as f32).collect()).unwrap();
        let run = run_model(&m, &x, RunOptions::new(ExecMode::Direct)).unwrap();
        assert_eq!(run.branches.len(), 1);
        let mut act = super::super::conv::conv_direct(
            &x,
            match &m.layers()[0] {
                Layer::Conv(ConvWeights::Dense { weights, .. }) => weights,
                _ => unreachable!(),
            },
            1,
            1,
        )
        .unwrap();
        act = relu(&act).unwrap();
        assert_eq!(run.branches[0].values, global_average(&act).unwrap());
        assert_eq!(run.conv_layers, 1);
    }

    #[test]
    fn zero_image_gives_zero_branches() {
        let m = ModelGraph::new(
            [2, 6, 6],
            vec![
                dense(4, 2, |i| (i % 5) as f32 - 2.0),
                Layer::Relu,
                Layer::BlockBoundary,
                Layer::SaveResidual,
                dense(4, 4, |i| (i % 3) as f32),
                Layer::AddResidual,
                Layer::Relu,
            ],
        )
        .unwrap();
        let x = Tensor::zeros(vec![2, 6, 6]).unwrap();
        for mode in [ExecMode::Direct, ExecMode::Clustered] {
            let run = run_model(&m, &x, RunOptions::new(mode)).unwrap();
            assert_eq!(run.branches.len(), 2);
            assert!(run.branches.iter().all(|b| b.values.iter().all(|&v| v == 0.0)));
        }
    }

    #[test]
    fn executor_stops_between_blocks() {
        let m = ModelGraph::new(
            [1, 4, 4],
            vec![dense(2, 1, |_| 1.0), Layer::BlockBoundary, dense(3, 2, |_| 1.0), dense(3, 3, |_| 1.0)],
        )
        .unwrap();
        let x = Tensor::zeros(vec![1, 4, 4]).unwrap();
        let mut exec = BlockExecutor::new(&m, &x, RunOptions::default()).unwrap();
        let b0 = exec.next_block().unwrap().unwrap();
        assert_eq!((b0.block, b0.dim(), exec.conv_layers()), (0, 2, 1));
        let b1 = exec.next_block().unwrap().unwrap();
        assert_eq!((b1.block, b1.dim(), exec.conv_layers()), (1, 3, 3));
        assert!(exec.next_block().unwrap().is_none());
        assert!(exec.is_done());
    }

    #[test]
    fn rejects_wrong_input_shape() {
        let m = ModelGraph::new([1, 4, 4], vec![dense(2, 1, |_| 1.0)]).unwrap();
        assert!(run_model(&m, &Tensor::zeros(vec![1, 5, 4]).unwrap(), RunOptions::default()).is_err());
    }
}

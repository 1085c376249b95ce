//! Branch-wise classification during feature extraction, with early
//! termination once consecutive blocks agree.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crp::{CrpConfig, CrpEncoder, BLOCK_SIDE};
use crate::error::{invalid, shape_err, Error, Result};
use crate::extractor::{BlockExecutor, BranchFeature, ModelGraph, OpCounts, RunOptions};
use crate::hdc::{self, footprint_bits, ClassMemory, ClassSums, Prediction, CLASS_MEMORY_BUDGET_BITS};
use crate::numerics::quantize_values;

/// Settings shared by branch training and inference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub hv_dim: usize,
    pub class_bits: u8,
    pub feature_bits: u8,
    pub seed: u64,
    pub budget_bits: u64,
    #[serde(skip)]
    pub run: RunOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            hv_dim: 4096,
            class_bits: 4,
            feature_bits: 4,
            seed: 0,
            budget_bits: CLASS_MEMORY_BUDGET_BITS,
            run: RunOptions::default(),
        }
    }
}

/// Exit when `e_consec` consecutive branch predictions, starting at block
/// `e_start` (1-based), agree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExitPolicy {
    pub e_start: usize,
    pub e_consec: usize,
    pub enabled: bool,
}

impl ExitPolicy {
    pub fn new(e_start: usize, e_consec: usize) -> Result<Self> {
        if e_start == 0 || e_consec == 0 {
            return Err(invalid!("E_s and E_c must be at least 1, got {e_start}, {e_consec}"));
        }
        Ok(Self { e_start, e_consec, enabled: true })
    }

    pub fn disabled() -> Self {
        Self { e_start: 1, e_consec: 1, enabled: false }
    }

    /// Earliest 1-based block at which an exit may fire.
    pub fn earliest_exit(&self) -> usize {
        self.e_start + self.e_consec - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPrediction {
    /// Zero-based block index.
    pub block: usize,
    pub class_id: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExitTrace {
    /// Predictions made so far, in block order.
    pub history: Vec<BlockPrediction>,
    /// Zero-based index of the last executed block.
    pub exit_block: usize,
    /// Convolution layers executed.
    pub layers_executed: usize,
    /// True when inference stopped before the final block.
    pub early: bool,
    pub ops: OpCounts,
}

/// One encoder per block: feature dim is the block width rounded up to a
/// multiple of 16 (the feature is zero-padded), seed is `seed ^ block`.
pub fn branch_encoders(branch_dims: &[usize], hv_dim: usize, seed: u64) -> Result<Vec<CrpConfig>> {
    branch_dims
        .iter()
        .enumerate()
        .map(|(b, &w)| CrpConfig::new(w.div_ceil(BLOCK_SIDE) * BLOCK_SIDE, hv_dim, seed ^ b as u64))
        .collect()
}

/// Quantizes one branch feature and zero-pads it to `feature_dim`.
pub fn quantize_branch_feature(values: &[f32], feature_dim: usize, bits: u8) -> Result<Vec<i32>> {
    if values.len() > feature_dim {
        return Err(shape_err!("branch feature has {} entries, encoder takes {feature_dim}", values.len()));
    }
    let (mut codes, _) = quantize_values(values, bits)?;
    codes.resize(feature_dim, 0);
    Ok(codes)
}

fn check_budget(branches: usize, n_classes: usize, cfg: &PipelineConfig) -> Result<()> {
    let needed = footprint_bits(branches, n_classes, cfg.hv_dim, cfg.class_bits);
    if needed > cfg.budget_bits {
        return Err(Error::BudgetExceeded { needed_bits: needed, cap_bits: cfg.budget_bits });
    }
    Ok(())
}

/// Trains one class table per block from already-extracted branch features
/// (`samples[i].0[b]` is the block-`b` feature of sample `i`).
pub fn train_branches_from_features(
    samples: &[(Vec<Vec<f32>>, usize)],
    branch_dims: &[usize],
    cfg: &PipelineConfig,
) -> Result<ClassMemory> {
    let n_classes = samples.iter().map(|(_, l)| l + 1).max().ok_or_else(|| invalid!("support set is empty"))?;
    check_budget(branch_dims.len(), n_classes, cfg)?;
    log::debug!("training {} branches, {n_classes} classes, {} samples", branch_dims.len(), samples.len());
    let encoders = branch_encoders(branch_dims, cfg.hv_dim, cfg.seed)?;
    let tables = encoders
        .iter()
        .enumerate()
        .map(|(b, enc_cfg)| {
            let features = samples
                .iter()
                .map(|(branches, label)| {
                    let f = branches.get(b).ok_or_else(|| shape_err!("sample lacks block {b}"))?;
                    if f.len() != branch_dims[b] {
                        return Err(shape_err!(
                            "block {b} feature has {} entries, expected {}",
                            f.len(),
                            branch_dims[b]
                        ));
                    }
                    Ok((quantize_branch_feature(f, enc_cfg.feature_dim, cfg.feature_bits)?, *label))
                })
                .collect::<Result<Vec<_>>>()?;
            let sums: ClassSums = hdc::batched_sums(&CrpEncoder::new(*enc_cfg)?, &features)?;
            if sums.n_classes() != n_classes {
                return Err(invalid!("class count differs across branches"));
            }
            sums.quantize(cfg.class_bits, *enc_cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    ClassMemory::new(cfg.class_bits, tables)
}

/// Extracts every support image and trains one class table per block.
pub fn train_branches(
    model: &ModelGraph,
    support: &[(crate::numerics::Tensor, usize)],
    cfg: &PipelineConfig,
) -> Result<ClassMemory> {
    let n_classes = support.iter().map(|(_, l)| l + 1).max().ok_or_else(|| invalid!("support set is empty"))?;
    check_budget(model.block_count(), n_classes, cfg)?;
    let samples = support
        .par_iter()
        .map(|(img, label)| {
            let run = crate::extractor::run_model(model, img, cfg.run)?;
            Ok((run.branches.into_iter().map(|b| b.values).collect(), *label))
        })
        .collect::<Result<Vec<_>>>()?;
    train_branches_from_features(&samples, &model.branch_dims(), cfg)
}

fn check_match(model: &ModelGraph, memory: &ClassMemory) -> Result<()> {
    let dims = model.branch_dims();
    if memory.branch_count() != dims.len() {
        return Err(shape_err!("memory has {} branches, model has {} blocks", memory.branch_count(), dims.len()));
    }
    for (b, (t, &w)) in memory.branches().iter().zip(&dims).enumerate() {
        if t.encoder.feature_dim != w.div_ceil(BLOCK_SIDE) * BLOCK_SIDE {
            return Err(shape_err!("branch {b} encoder takes {} features, block width is {w}", t.encoder.feature_dim));
        }
    }
    Ok(())
}

/// Classifies one branch feature against its class table.
pub fn infer_branch(feature: &BranchFeature, memory: &ClassMemory, feature_bits: u8) -> Result<Prediction> {
    let enc_cfg = memory.branch(feature.block)?.encoder;
    let codes = quantize_branch_feature(&feature.values, enc_cfg.feature_dim, feature_bits)?;
    let hv = CrpEncoder::new(enc_cfg)?.encode(&codes)?;
    hdc::infer(&hv, memory, feature.block)
}

/// The exit decision, fed one block at a time.
#[derive(Debug, Clone)]
pub struct ExitTracker {
    policy: ExitPolicy,
    last_block: usize,
    history: Vec<BlockPrediction>,
}

impl ExitTracker {
    pub fn new(policy: ExitPolicy, block_count: usize) -> Result<Self> {
        if block_count == 0 {
            return Err(invalid!("model has no blocks"));
        }
        if policy.enabled && (policy.e_start == 0 || policy.e_consec == 0) {
            return Err(invalid!("E_s and E_c must be at least 1"));
        }
        Ok(Self { policy, last_block: block_count - 1, history: Vec::new() })
    }

    /// Whether zero-based `block` needs a prediction.
    pub fn wants(&self, block: usize) -> bool {
        if self.policy.enabled {
            block + 1 >= self.policy.e_start || block == self.last_block
        } else {
            block == self.last_block
        }
    }

    /// Records a prediction; returns true when inference should stop here.
    pub fn observe(&mut self, block: usize, class_id: usize) -> bool {
        self.history.push(BlockPrediction { block, class_id });
        let ec = self.policy.e_consec;
        let agreed = self.policy.enabled
            && self.history.len() >= ec
            && self.history[self.history.len() - ec..].iter().all(|p| p.class_id == class_id);
        agreed || block == self.last_block
    }

    pub fn history(&self) -> &[BlockPrediction] {
        &self.history
    }

    pub fn into_history(self) -> Vec<BlockPrediction> {
        self.history
    }
}

/// Runs the model block by block. From block `E_s` on, each branch is
/// classified; inference stops as soon as the last `E_c` predictions agree,
/// and otherwise returns the final block's prediction. A disabled policy
/// classifies the final branch only.
pub fn infer_early_exit(
    model: &ModelGraph,
    memory: &ClassMemory,
    image: &crate::numerics::Tensor,
    policy: &ExitPolicy,
    cfg: &PipelineConfig,
) -> Result<(Prediction, ExitTrace)> {
    check_match(model, memory)?;
    let mut tracker = ExitTracker::new(*policy, model.block_count())?;
    let mut exec = BlockExecutor::new(model, image, cfg.run)?;
    while let Some(feature) = exec.next_block()? {
        let block = feature.block;
        if !tracker.wants(block) {
            continue;
        }
        let pred = infer_branch(&feature, memory, cfg.feature_bits)?;
        if tracker.observe(block, pred.class_id) {
            let trace = ExitTrace {
                history: tracker.into_history(),
                exit_block: block,
                layers_executed: exec.conv_layers(),
                early: block + 1 < model.block_count(),
                ops: exec.ops(),
            };
            return Ok((pred, trace));
        }
    }
    unreachable!("the final block always stops")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitStatistics {
    pub avg_layers: f64,
    pub total_layers: usize,
    /// Exit counts per zero-based block.
    pub exit_histogram: Vec<usize>,
}

pub fn exit_statistics(traces: &[ExitTrace], model: &ModelGraph) -> Result<ExitStatistics> {
    if traces.is_empty() {
        return Err(invalid!("no traces"));
    }
    let mut exit_histogram = vec![0usize; model.block_count()];
    let mut layers = 0u64;
    for t in traces {
        *exit_histogram
            .get_mut(t.exit_block)
            .ok_or_else(|| invalid!("trace exits at block {} of {}", t.exit_block, model.block_count()))? += 1;
        layers += t.layers_executed as u64;
    }
    Ok(ExitStatistics {
        avg_layers: layers as f64 / traces.len() as f64,
        total_layers: model.conv_layer_count(),
        exit_histogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extractor::{bundled_model, run_model, BUNDLED_INPUT};
    use crate::numerics::Tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn image(rng: &mut ChaCha8Rng) -> Tensor {
        let [c, h, w] = BUNDLED_INPUT;
        Tensor::from_f32(vec![c, h, w], (0..c * h * w).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
    }

    fn cfg(hv_dim: usize, class_bits: u8) -> PipelineConfig {
        PipelineConfig { hv_dim, class_bits, seed: 3, ..Default::default() }
    }

    #[test]
    fn encoders_pad_and_mix_seeds() {
        let e = branch_encoders(&[16, 20, 64], 64, 10).unwrap();
        assert_eq!(e.iter().map(|c| c.feature_dim).collect::<Vec<_>>(), vec![16, 32, 64]);
        assert_eq!(e.iter().map(|c| c.seed).collect::<Vec<_>>(), vec![10, 11, 8]);
        assert_eq!(quantize_branch_feature(&[0.0, 1.0, 0.5], 16, 4).unwrap()[..4], [0, 15, 8, 0]);
        assert!(quantize_branch_feature(&[1.0; 20], 16, 4).is_err());
    }

    #[test]
    fn one_shot_branches_hold_the_support_encodings() {
        let model = bundled_model(1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let support: Vec<(Tensor, usize)> = (0..2).map(|c| (image(&mut rng), c)).collect();
        let c = cfg(64, 16);
        let m = train_branches(&model, &support, &c).unwrap();
        assert_eq!(m.branch_count(), 4);
        for (img, label) in &support {
            let run = run_model(&model, img, c.run).unwrap();
            for (b, f) in run.branches.iter().enumerate() {
                let enc = m.branches()[b].encoder;
                let hv = CrpEncoder::new(enc)
                    .unwrap()
                    .encode(&quantize_branch_feature(&f.values, enc.feature_dim, 4).unwrap())
                    .unwrap();
                let cv = &m.branches()[b].classes[*label];
                assert_eq!(cv.dequantized_sum(), hv.values.iter().map(|&v| v as i64).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn budget_is_exactly_filled_and_enforced() {
        assert_eq!(footprint_bits(4, 32, 4096, 4), CLASS_MEMORY_BUDGET_BITS);
        assert!(check_budget(4, 32, &cfg(4096, 4)).is_ok());
        assert!(matches!(check_budget(4, 33, &cfg(4096, 4)), Err(Error::BudgetExceeded { .. })));
    }

    /// Memory whose class 2 matches the query's encoding at every branch
    /// and whose other classes hold the negated encoding.
    fn forced_memory(model: &ModelGraph, query: &Tensor, c: &PipelineConfig) -> ClassMemory {
        let run = run_model(model, query, c.run).unwrap();
        let encoders = branch_encoders(&model.branch_dims(), c.hv_dim, c.seed).unwrap();
        let tables = run
            .branches
            .iter()
            .zip(&encoders)
            .map(|(f, enc)| {
                let codes = quantize_branch_feature(&f.values, enc.feature_dim, c.feature_bits).unwrap();
                let hv = CrpEncoder::new(*enc).unwrap().encode(&codes).unwrap();
                let neg: Vec<i32> = hv.values.iter().map(|v| -v).collect();
                let mut s = ClassSums::new(4, c.hv_dim);
                for class in 0..4 {
                    s.add(class, if class == 2 { &hv.values } else { &neg }).unwrap();
                }
                s.quantize(c.class_bits, *enc).unwrap()
            })
            .collect();
        ClassMemory::new(c.class_bits, tables).unwrap()
    }

    #[test]
    fn forced_agreement_exits_at_second_block() {
        let model = bundled_model(2);
        let q = image(&mut ChaCha8Rng::seed_from_u64(4));
        let c = cfg(256, 16);
        let m = forced_memory(&model, &q, &c);
        let (p, t) = infer_early_exit(&model, &m, &q, &ExitPolicy::new(1, 2).unwrap(), &c).unwrap();
        assert_eq!(p.class_id, 2);
        assert_eq!(t.exit_block, 1);
        assert!(t.early);
        assert_eq!(t.layers_executed, 4);
        assert_eq!(t.history.len(), 2);
    }

    #[test]
    fn degenerate_policies_match_full_inference() {
        let model = bundled_model(5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let support: Vec<(Tensor, usize)> = (0..6).map(|i| (image(&mut rng), i % 3)).collect();
        let c = cfg(256, 4);
        let m = train_branches(&model, &support, &c).unwrap();
        for _ in 0..5 {
            let q = image(&mut rng);
            let (full, ft) = infer_early_exit(&model, &m, &q, &ExitPolicy::disabled(), &c).unwrap();
            let final_branch = run_model(&model, &q, c.run).unwrap().branches.pop().unwrap();
            assert_eq!(full, infer_branch(&final_branch, &m, 4).unwrap());
            assert_eq!(ft.layers_executed, 8);
            assert_eq!(ft.history.len(), 1);
            for policy in [ExitPolicy::new(4, 1).unwrap(), ExitPolicy::new(3, 3).unwrap()] {
                let (p, t) = infer_early_exit(&model, &m, &q, &policy, &c).unwrap();
                assert_eq!(p, full);
                assert_eq!(t.exit_block, 3);
                assert!(!t.early);
            }
        }
    }

    #[test]
    fn larger_windows_never_exit_sooner() {
        let model = bundled_model(6);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let support: Vec<(Tensor, usize)> = (0..8).map(|i| (image(&mut rng), i % 2)).collect();
        let c = cfg(256, 4);
        let m = train_branches(&model, &support, &c).unwrap();
        for _ in 0..6 {
            let q = image(&mut rng);
            let mut prev = 0;
            for ec in 1..=4 {
                let (_, t) = infer_early_exit(&model, &m, &q, &ExitPolicy::new(1, ec).unwrap(), &c).unwrap();
                assert!(t.layers_executed >= prev);
                assert!(t.exit_block + 1 >= ec.min(4));
                prev = t.layers_executed;
            }
        }
    }

    #[test]
    fn mismatched_memory_is_rejected() {
        let model = bundled_model(1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let support: Vec<(Tensor, usize)> = (0..2).map(|c| (image(&mut rng), c)).collect();
        let c = cfg(64, 4);
        let m = train_branches(&model, &support, &c).unwrap();
        let one_block = ClassMemory::new(4, vec![m.branches()[0].clone()]).unwrap();
        assert!(infer_early_exit(&model, &one_block, &support[0].0, &ExitPolicy::disabled(), &c).is_err());
    }

    #[test]
    fn statistics() {
        let model = bundled_model(1);
        let trace = |exit_block: usize, layers: usize| ExitTrace {
            history: vec![],
            exit_block,
            layers_executed: layers,
            early: exit_block < 3,
            ops: OpCounts::default(),
        };
        let s = exit_statistics(&[trace(3, 8), trace(3, 8)], &model).unwrap();
        assert_eq!(s.avg_layers, 8.0);
        let s = exit_statistics(&[trace(1, 4), trace(3, 8)], &model).unwrap();
        assert_eq!(s.avg_layers, 0.75 * 8.0);
        assert_eq!(s.exit_histogram, vec![0, 1, 0, 1]);
        assert!(exit_statistics(&[], &model).is_err());
        assert!(exit_statistics(&[trace(4, 8)], &model).is_err());
    }
}

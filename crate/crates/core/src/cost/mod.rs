//! Analytic on-device learning cost: full fine-tuning, partial fine-tuning,
//! kNN and the HDC pipeline, in uniformly weighted ops (one multiply or one add).

use serde::{Deserialize, Serialize};

use crate::early_exit::branch_encoders;
use crate::error::{invalid, Result};
use crate::extractor::{run_model, ExecMode, ModelGraph, OpCounts, RunOptions};
use crate::numerics::Tensor;

/// Per-sample component costs for one regime.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub cost_fp: u64,
    pub cost_gc: u64,
    pub cost_bp: u64,
    pub cost_wu: u64,
    pub cost_hdc: u64,
    pub t_itr: u64,
    pub n_sample: u64,
}

/// `T · N · (FP + GC + BP + WU)`.
pub fn cost_full_ft(b: &CostBreakdown) -> u128 {
    b.t_itr as u128
        * b.n_sample as u128
        * (b.cost_fp as u128 + b.cost_gc as u128 + b.cost_bp as u128 + b.cost_wu as u128)
}

/// `T · N · (FP + GC)`.
pub fn cost_partial_ft(b: &CostBreakdown) -> u128 {
    b.t_itr as u128 * b.n_sample as u128 * (b.cost_fp as u128 + b.cost_gc as u128)
}

/// `N · (FP + HDC)`; a single pass, so `t_itr` is ignored.
pub fn cost_fsl_hdnn(b: &CostBreakdown) -> u128 {
    b.n_sample as u128 * (b.cost_fp as u128 + b.cost_hdc as u128)
}

/// HDC ops per sample: for every branch, `D · F` to encode, `D` to aggregate
/// and `C · D` for the distance search.
pub fn hdc_cost_per_sample(feature_dims: &[usize], hv_dim: usize, n_classes: usize) -> u64 {
    let d = hv_dim as u64;
    feature_dims.iter().map(|&f| d * f as u64 + d + n_classes as u64 * d).sum()
}

/// Fine-tuning assumptions. Backward costs are FP-proportional estimates,
/// not measurements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FtAssumptions {
    pub full_epochs: u64,
    pub partial_epochs: u64,
    pub gc_per_fp: f64,
    pub bp_per_fp: f64,
    pub wu_per_fp: f64,
}

impl Default for FtAssumptions {
    fn default() -> Self {
        Self { full_epochs: 5, partial_epochs: 15, gc_per_fp: 1.0, bp_per_fp: 1.0, wu_per_fp: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeCost {
    pub regime: String,
    pub total_ops: u128,
    pub breakdown: CostBreakdown,
    /// True when some components are FP-proportional estimates.
    pub estimated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub n_way: usize,
    pub k_shot: usize,
    pub hv_dim: usize,
    pub assumptions: FtAssumptions,
    /// Measured backbone ops per sample, dense arithmetic.
    pub backbone_direct: OpCounts,
    /// Measured backbone ops per sample, partial-sum reuse.
    pub backbone_clustered: OpCounts,
    pub regimes: Vec<RegimeCost>,
}

impl CostReport {
    pub fn regime(&self, name: &str) -> Option<&RegimeCost> {
        self.regimes.iter().find(|r| r.regime == name)
    }
}

pub const REGIMES: [&str; 4] = ["full", "partial", "knn", "hdnn"];

fn scaled(v: u64, k: f64) -> u64 {
    (v as f64 * k).round() as u64
}

/// Evaluates the requested regimes for an `n_way`-way `k_shot`-shot episode
/// on `model`, using op counters measured by running it once.
///
/// Fine-tuning regimes run the backbone densely plus a linear `C x F` head.
/// Full fine-tuning back-propagates through everything (GC, BP, WU scaled
/// from FP). Partial fine-tuning trains only the head, so its GC is the head
/// weight gradient (`2 · C · F`) and it has no BP or WU. kNN extracts each
/// support sample once. The HDC pipeline uses the clustered backbone plus
/// branch encoding, aggregation and search.
pub fn cost_report(
    model: &ModelGraph,
    n_way: usize,
    k_shot: usize,
    hv_dim: usize,
    assumptions: FtAssumptions,
    regimes: &[&str],
) -> Result<CostReport> {
    if n_way == 0 || k_shot == 0 {
        return Err(invalid!("episode must have at least one way and one shot"));
    }
    if let Some(r) = regimes.iter().find(|r| !REGIMES.contains(r)) {
        return Err(invalid!("unknown regime '{r}', expected one of {REGIMES:?}"));
    }
    let [c, h, w] = model.input_shape();
    let probe = Tensor::from_f32(vec![c, h, w], vec![1.0; c * h * w])?;
    let direct = run_model(model, &probe, RunOptions::new(ExecMode::Direct))?.ops;
    let clustered = run_model(model, &probe, RunOptions::new(ExecMode::Clustered))?.ops;

    let dims = model.branch_dims();
    let final_dim = *dims.last().unwrap() as u64;
    let head = 2 * n_way as u64 * final_dim;
    let fp_ft = direct.total() + head;
    let n = (n_way * k_shot) as u64;
    let padded: Vec<usize> = branch_encoders(&dims, hv_dim, 0)?.iter().map(|e| e.feature_dim).collect();

    let out = regimes
        .iter()
        .map(|&r| {
            let (breakdown, total, estimated) = match r {
                "full" => {
                    let b = CostBreakdown {
                        cost_fp: fp_ft,
                        cost_gc: scaled(fp_ft, assumptions.gc_per_fp),
                        cost_bp: scaled(fp_ft, assumptions.bp_per_fp),
                        cost_wu: scaled(fp_ft, assumptions.wu_per_fp),
                        t_itr: assumptions.full_epochs,
                        n_sample: n,
                        ..Default::default()
                    };
                    (b, cost_full_ft(&b), true)
                }
                "partial" => {
                    let b = CostBreakdown {
                        cost_fp: fp_ft,
                        cost_gc: head,
                        t_itr: assumptions.partial_epochs,
                        n_sample: n,
                        ..Default::default()
                    };
                    (b, cost_partial_ft(&b), false)
                }
                "knn" => {
                    let b = CostBreakdown { cost_fp: direct.total(), t_itr: 1, n_sample: n, ..Default::default() };
                    (b, cost_fsl_hdnn(&b), false)
                }
                _ => {
                    let b = CostBreakdown {
                        cost_fp: clustered.total(),
                        cost_hdc: hdc_cost_per_sample(&padded, hv_dim, n_way),
                        t_itr: 1,
                        n_sample: n,
                        ..Default::default()
                    };
                    (b, cost_fsl_hdnn(&b), false)
                }
            };
            RegimeCost { regime: r.to_string(), total_ops: total, breakdown, estimated }
        })
        .collect();
    Ok(CostReport {
        n_way,
        k_shot,
        hv_dim,
        assumptions,
        backbone_direct: direct,
        backbone_clustered: clustered,
        regimes: out,
    })
}

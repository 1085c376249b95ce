//! `(x, y)` series for weight-clustering, accuracy and early-exit charts.

use serde::{Deserialize, Serialize};

use crate::clustering::{cluster_layer, compression_ratio, int8_fake_quantize, op_reduction_ratio, ConvShape};
use crate::early_exit::ExitPolicy;
use crate::error::{shape_err, Result};
use crate::numerics::Tensor;

use super::dataset::FeatureDataset;
use super::episode::{run_benchmark, BranchBank, EpisodeSpec, HarnessConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub name: String,
    pub x_label: String,
    pub y_label: String,
    pub points: Vec<[f64; 2]>,
}

impl PlotSeries {
    fn new(name: &str, x_label: &str, y_label: &str) -> Self {
        Self { name: name.into(), x_label: x_label.into(), y_label: y_label.into(), points: Vec::new() }
    }
}

fn rms(a: &[f32], b: &[f32]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Compression, op reduction and reconstruction RMS error against the
/// centroid count, with per-tensor INT8 error as a flat reference.
pub fn clustering_tradeoff(
    weights: &Tensor,
    ch_sub: usize,
    centroid_counts: &[usize],
    seed: u64,
) -> Result<Vec<PlotSeries>> {
    let w = weights.as_f32().ok_or_else(|| shape_err!("weights must be F32"))?;
    let s = weights.shape();
    if s.len() != 4 {
        return Err(shape_err!("conv weights must be [cout, cin, k, k], got {s:?}"));
    }
    let shape = ConvShape { cout: s[0], cin: s[1], k: s[2] };
    let int8 = rms(w, &int8_fake_quantize(w));
    let mut comp = PlotSeries::new("compression_ratio", "centroids", "ratio vs 8-bit");
    let mut ops = PlotSeries::new("op_reduction", "centroids", "ratio");
    let mut err = PlotSeries::new("clustered_rms_error", "centroids", "rms error");
    let mut int8_err = PlotSeries::new("int8_rms_error", "centroids", "rms error");
    for &n in centroid_counts {
        let x = n as f64;
        let layer = cluster_layer(weights, ch_sub, n, seed, 1, 0)?;
        comp.points.push([x, compression_ratio(shape, ch_sub, n, 8)?]);
        ops.points.push([x, op_reduction_ratio(shape.k, n, ch_sub.min(shape.cin))?]);
        err.points.push([x, rms(w, layer.reconstruct().as_f32().unwrap())]);
        int8_err.points.push([x, int8]);
    }
    Ok(vec![comp, ops, err, int8_err])
}

/// Mean HDC accuracy against class-vector width, with the kNN baseline.
pub fn accuracy_vs_bits(
    dataset: &FeatureDataset,
    bank: &BranchBank,
    template: &EpisodeSpec,
    episodes: usize,
    cfg: &HarnessConfig,
    bits: &[u8],
) -> Result<Vec<PlotSeries>> {
    let mut hdc = PlotSeries::new("hdc_accuracy", "class hv bits", "accuracy");
    let mut knn = PlotSeries::new("knn_accuracy", "class hv bits", "accuracy");
    for &b in bits {
        let mut c = *cfg;
        c.pipeline.class_bits = b;
        c.policy = None;
        let (_, s) = run_benchmark(dataset, bank, template, episodes, &c)?;
        hdc.points.push([b as f64, s.hdc_accuracy]);
        knn.points.push([b as f64, s.knn_accuracy]);
    }
    Ok(vec![hdc, knn])
}

/// Average executed conv layers against accuracy, one point per `E_c`.
pub fn exit_tradeoff(
    dataset: &FeatureDataset,
    bank: &BranchBank,
    template: &EpisodeSpec,
    episodes: usize,
    cfg: &HarnessConfig,
    e_start: usize,
    e_consec: &[usize],
) -> Result<Vec<PlotSeries>> {
    let mut series = PlotSeries::new(&format!("early_exit_es{e_start}"), "avg conv layers", "accuracy");
    let mut full = PlotSeries::new("full_inference", "avg conv layers", "accuracy");
    for &ec in e_consec {
        let mut c = *cfg;
        c.policy = Some(ExitPolicy::new(e_start, ec)?);
        let (_, s) = run_benchmark(dataset, bank, template, episodes, &c)?;
        series.points.push([s.avg_layers.unwrap(), s.ee_accuracy.unwrap()]);
        if full.points.is_empty() {
            full.points.push([s.full_layers as f64, s.hdc_accuracy]);
        }
    }
    Ok(vec![series, full])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::synth::{synthetic_gaussian, GaussianSpec};

    #[test]
    fn clustering_error_falls_with_more_centroids() {
        let w: Vec<f32> = (0..8 * 16 * 9).map(|i| ((i as f32 * 0.618).fract() - 0.5) * 0.2).collect();
        let t = Tensor::from_f32(vec![8, 16, 3, 3], w).unwrap();
        let s = clustering_tradeoff(&t, 16, &[2, 4, 8, 16], 0).unwrap();
        let err: Vec<f64> = s[2].points.iter().map(|p| p[1]).collect();
        assert!(err.windows(2).all(|w| w[1] < w[0]), "{err:?}");
        assert_eq!(s[0].points.len(), 4);
    }

    #[test]
    fn accuracy_series_shape() {
        let d = synthetic_gaussian(&GaussianSpec { n_classes: 6, per_class: 6, feature_dim: 32, ..Default::default() })
            .unwrap();
        let bank = BranchBank::extract(&d, None, Default::default(), None).unwrap();
        let cfg = HarnessConfig {
            pipeline: crate::early_exit::PipelineConfig { hv_dim: 256, ..Default::default() },
            policy: None,
        };
        let spec = EpisodeSpec { n_way: 3, k_shot: 2, q_query: 2, seed: 0 };
        let s = accuracy_vs_bits(&d, &bank, &spec, 4, &cfg, &[1, 4]).unwrap();
        assert_eq!(s[0].points.len(), 2);
        assert!(s[0].points.iter().all(|p| (0.0..=1.0).contains(&p[1])));
    }
}

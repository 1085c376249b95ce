//! N-way k-shot episodes: sampling, end-to-end runs and aggregate metrics.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crp::CrpEncoder;
use crate::early_exit::{
    quantize_branch_feature, train_branches_from_features, ExitPolicy, ExitTracker, PipelineConfig,
};
use crate::error::{invalid, Result};
use crate::extractor::{BlockExecutor, ModelGraph, OpCounts, RunOptions};
use crate::hdc::{infer, knn_l1_baseline, ClassMemory};
use crate::numerics::quantize_values;

use super::dataset::FeatureDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub n_way: usize,
    pub k_shot: usize,
    pub q_query: usize,
    pub seed: u64,
}

/// Sampled sample indices with their episode labels `0..n_way`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    /// Dataset class behind each episode label.
    pub classes: Vec<usize>,
    pub support: Vec<(usize, usize)>,
    pub query: Vec<(usize, usize)>,
}

/// Draws `n_way` distinct classes, then `k_shot + q_query` distinct samples
/// from each, without replacement, from a ChaCha8 stream keyed by the seed.
pub fn sample_episode(dataset: &FeatureDataset, spec: &EpisodeSpec) -> Result<Episode> {
    if spec.n_way == 0 || spec.k_shot == 0 {
        return Err(invalid!("episode needs n_way >= 1 and k_shot >= 1"));
    }
    if spec.n_way > dataset.n_classes() {
        return Err(invalid!("{}-way episode from {} classes", spec.n_way, dataset.n_classes()));
    }
    let by_class = dataset.class_indices();
    let need = spec.k_shot + spec.q_query;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let classes: Vec<usize> = sample(&mut rng, dataset.n_classes(), spec.n_way).into_vec();
    let mut support = Vec::with_capacity(spec.n_way * spec.k_shot);
    let mut query = Vec::with_capacity(spec.n_way * spec.q_query);
    for (label, &c) in classes.iter().enumerate() {
        let pool = &by_class[c];
        if pool.len() < need {
            return Err(invalid!("class {c} has {} samples, episode needs {need}", pool.len()));
        }
        let picks = sample(&mut rng, pool.len(), need).into_vec();
        support.extend(picks[..spec.k_shot].iter().map(|&i| (pool[i], label)));
        query.extend(picks[spec.k_shot..].iter().map(|&i| (pool[i], label)));
    }
    Ok(Episode { classes, support, query })
}

/// Branch features of one sample and the cumulative ops after each block.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBranches {
    pub features: Vec<Vec<f32>>,
    pub ops_after_block: Vec<OpCounts>,
}

/// Precomputed branch features for (a subset of) a dataset. Feature-row
/// datasets form a single branch with no extraction cost.
#[derive(Debug, Clone)]
pub struct BranchBank {
    pub branch_dims: Vec<usize>,
    pub conv_per_block: Vec<usize>,
    samples: Vec<Option<SampleBranches>>,
}

impl BranchBank {
    /// Extracts the samples in `indices` (all when `None`).
    pub fn extract(
        dataset: &FeatureDataset,
        model: Option<&ModelGraph>,
        run: RunOptions,
        indices: Option<&[usize]>,
    ) -> Result<Self> {
        let all: Vec<usize>;
        let indices = match indices {
            Some(i) => i,
            None => {
                all = (0..dataset.len()).collect();
                &all
            }
        };
        let mut samples = vec![None; dataset.len()];
        if !dataset.is_image() {
            let f = dataset.sample_shape()[0];
            for &i in indices {
                samples[i] = Some(SampleBranches {
                    features: vec![dataset.sample(i).to_vec()],
                    ops_after_block: vec![OpCounts::default()],
                });
            }
            return Ok(Self { branch_dims: vec![f], conv_per_block: vec![0], samples });
        }
        let model = model.ok_or_else(|| invalid!("image datasets need a model"))?;
        if dataset.sample_shape() != model.input_shape() {
            return Err(invalid!("images are {:?}, model expects {:?}", dataset.sample_shape(), model.input_shape()));
        }
        let extracted = indices
            .par_iter()
            .map(|&i| {
                let mut exec = BlockExecutor::new(model, &dataset.image(i)?, run)?;
                let mut s = SampleBranches { features: Vec::new(), ops_after_block: Vec::new() };
                while let Some(b) = exec.next_block()? {
                    s.features.push(b.values);
                    s.ops_after_block.push(exec.ops());
                }
                Ok((i, s))
            })
            .collect::<Result<Vec<_>>>()?;
        for (i, s) in extracted {
            samples[i] = Some(s);
        }
        Ok(Self { branch_dims: model.branch_dims(), conv_per_block: model.conv_layers_per_block(), samples })
    }

    pub fn block_count(&self) -> usize {
        self.branch_dims.len()
    }

    pub fn get(&self, i: usize) -> Result<&SampleBranches> {
        self.samples.get(i).and_then(|s| s.as_ref()).ok_or_else(|| invalid!("sample {i} was not extracted"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HarnessConfig {
    pub pipeline: PipelineConfig,
    /// Early-exit policy evaluated alongside full inference.
    pub policy: Option<ExitPolicy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub seed: u64,
    pub n_query: usize,
    /// Final-branch HDC accuracy; absent without queries.
    pub hdc_accuracy: Option<f64>,
    /// 1-NN L1 accuracy on the same quantized final-branch features.
    pub knn_accuracy: Option<f64>,
    pub ee_accuracy: Option<f64>,
    /// Mean convolution layers executed per query under the policy.
    pub avg_layers: Option<f64>,
    pub full_layers: usize,
    /// Extraction ops for the support set and full-depth queries.
    pub ops: OpCounts,
    /// Extraction ops for the queries under the policy.
    pub ee_query_ops: Option<OpCounts>,
    pub memory_bits: u64,
}

fn accuracy(correct: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| correct as f64 / total as f64)
}

/// Trains on the support set and classifies the queries, from precomputed branches.
pub fn run_episode_on_bank(
    bank: &BranchBank,
    episode: &Episode,
    seed: u64,
    cfg: &HarnessConfig,
) -> Result<EpisodeResult> {
    let p = &cfg.pipeline;
    let support =
        episode.support.iter().map(|&(i, l)| Ok((bank.get(i)?.features.clone(), l))).collect::<Result<Vec<_>>>()?;
    let memory: ClassMemory = train_branches_from_features(&support, &bank.branch_dims, p)?;
    let encoders = memory.branches().iter().map(|t| CrpEncoder::cached(t.encoder)).collect::<Result<Vec<_>>>()?;
    let predict = |s: &[Vec<f32>], b: usize| -> Result<usize> {
        let enc = &encoders[b];
        let codes = quantize_branch_feature(&s[b], enc.config().feature_dim, p.feature_bits)?;
        Ok(infer(&enc.encode(&codes)?, &memory, b)?.class_id)
    };
    let last = bank.block_count() - 1;
    let quantized = |f: &[f32]| quantize_values(f, p.feature_bits).map(|(c, _)| c);
    let knn_support = support.iter().map(|(f, l)| Ok((quantized(&f[last])?, *l))).collect::<Result<Vec<_>>>()?;

    let mut ops = OpCounts::default();
    for &(i, _) in &episode.support {
        ops += *bank.get(i)?.ops_after_block.last().unwrap();
    }
    let (mut hdc_ok, mut knn_ok, mut ee_ok, mut layers) = (0, 0, 0, 0usize);
    let mut ee_ops = OpCounts::default();
    for &(i, label) in &episode.query {
        let s = bank.get(i)?;
        ops += *s.ops_after_block.last().unwrap();
        let full = predict(&s.features, last)?;
        hdc_ok += (full == label) as usize;
        knn_ok += (knn_l1_baseline(&quantized(&s.features[last])?, &knn_support)? == label) as usize;
        if let Some(policy) = cfg.policy {
            let mut tracker = ExitTracker::new(policy, bank.block_count())?;
            for b in 0..bank.block_count() {
                if !tracker.wants(b) {
                    continue;
                }
                let class = if b == last { full } else { predict(&s.features, b)? };
                if tracker.observe(b, class) {
                    ee_ok += (class == label) as usize;
                    layers += bank.conv_per_block[..=b].iter().sum::<usize>();
                    ee_ops += s.ops_after_block[b];
                    break;
                }
            }
        }
    }
    let n = episode.query.len();
    let with_policy = |v: Option<f64>| if cfg.policy.is_some() { v } else { None };
    Ok(EpisodeResult {
        seed,
        n_query: n,
        hdc_accuracy: accuracy(hdc_ok, n),
        knn_accuracy: accuracy(knn_ok, n),
        ee_accuracy: with_policy(accuracy(ee_ok, n)),
        avg_layers: with_policy((n > 0).then(|| layers as f64 / n as f64)),
        full_layers: bank.conv_per_block.iter().sum(),
        ops,
        ee_query_ops: cfg.policy.map(|_| ee_ops),
        memory_bits: memory.footprint_bits(),
    })
}

/// Samples one episode, extracts just its samples and runs it.
pub fn run_episode(
    dataset: &FeatureDataset,
    model: Option<&ModelGraph>,
    spec: &EpisodeSpec,
    cfg: &HarnessConfig,
) -> Result<EpisodeResult> {
    let episode = sample_episode(dataset, spec)?;
    let indices: Vec<usize> = episode.support.iter().chain(&episode.query).map(|&(i, _)| i).collect();
    let bank = BranchBank::extract(dataset, model, cfg.pipeline.run, Some(&indices))?;
    run_episode_on_bank(&bank, &episode, spec.seed, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub episodes: usize,
    pub n_way: usize,
    pub k_shot: usize,
    pub q_query: usize,
    pub hdc_accuracy: f64,
    pub knn_accuracy: f64,
    /// HDC minus kNN, in percentage points.
    pub gap_pp: f64,
    pub ee_accuracy: Option<f64>,
    pub avg_layers: Option<f64>,
    pub full_layers: usize,
    /// `1 − avg_layers / full_layers`.
    pub layer_reduction: Option<f64>,
    pub mean_ops: f64,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Episode `i` uses seed `template.seed + i`. Episodes run in parallel; the
/// summary is reduced in episode order, so it does not depend on scheduling.
pub fn run_benchmark(
    dataset: &FeatureDataset,
    bank: &BranchBank,
    template: &EpisodeSpec,
    episodes: usize,
    cfg: &HarnessConfig,
) -> Result<(Vec<EpisodeResult>, BenchmarkSummary)> {
    if episodes == 0 || template.q_query == 0 {
        return Err(invalid!("benchmark needs at least one episode and one query per class"));
    }
    let results = (0..episodes)
        .into_par_iter()
        .map(|i| {
            let spec = EpisodeSpec { seed: template.seed.wrapping_add(i as u64), ..*template };
            run_episode_on_bank(bank, &sample_episode(dataset, &spec)?, spec.seed, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    log::debug!("ran {episodes} episodes of {}-way {}-shot", template.n_way, template.k_shot);
    let hdc = mean(results.iter().filter_map(|r| r.hdc_accuracy)).unwrap();
    let knn = mean(results.iter().filter_map(|r| r.knn_accuracy)).unwrap();
    let avg_layers = mean(results.iter().filter_map(|r| r.avg_layers));
    let full_layers = results[0].full_layers;
    let summary = BenchmarkSummary {
        episodes,
        n_way: template.n_way,
        k_shot: template.k_shot,
        q_query: template.q_query,
        hdc_accuracy: hdc,
        knn_accuracy: knn,
        gap_pp: 100.0 * (hdc - knn),
        ee_accuracy: mean(results.iter().filter_map(|r| r.ee_accuracy)),
        avg_layers,
        full_layers,
        layer_reduction: avg_layers.filter(|_| full_layers > 0).map(|a| 1.0 - a / full_layers as f64),
        mean_ops: mean(results.iter().map(|r| r.ops.total() as f64)).unwrap(),
    };
    Ok((results, summary))
}

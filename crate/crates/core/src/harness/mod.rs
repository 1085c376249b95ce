//! Datasets, episode sampling, end-to-end runs and plot series.

mod dataset;
mod episode;
mod plots;
mod synth;

pub use dataset::{FeatureDataset, LabelSidecar};
pub use episode::{
    run_benchmark, run_episode, run_episode_on_bank, sample_episode, BenchmarkSummary, BranchBank, Episode,
    EpisodeResult, EpisodeSpec, HarnessConfig, SampleBranches,
};
pub use plots::{accuracy_vs_bits, clustering_tradeoff, exit_tradeoff, PlotSeries};
pub use synth::{synthetic_gaussian, synthetic_images, GaussianSpec, ImageSpec};

//! `fslhd`: command-line front end for the few-shot learning pipeline.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fslhd_core::ErrorClass;

use output::OutFormat;

#[derive(Parser, Debug)]
#[command(
    name = "fslhd",
    version,
    about = "Few-shot learning with clustered CNN features and cyclic random projection HDC"
)]
pub struct Cli {
    /// Seed for every random choice (each command documents its default).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Format of reports written to --out or stdout.
    #[arg(long, global = true, value_enum, default_value = "json")]
    pub out_format: OutFormat,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset or the bundled model.
    GenSynth(GenSynthArgs),
    /// Cluster every dense convolution of a model.
    Cluster(ClusterArgs),
    /// Extract per-block branch features from images.
    Extract(ExtractArgs),
    /// Encode feature rows into hypervectors.
    Encode(EncodeArgs),
    /// Train a class memory from labeled features or images.
    Train(TrainArgs),
    /// Classify features or images against a class memory.
    Infer(InferArgs),
    /// Run seeded N-way k-shot episodes and report accuracies.
    Episode(EpisodeArgs),
    /// Compare on-device learning op counts across regimes.
    Cost(CostArgs),
    /// Convert raw byte dumps into FSLT tensors.
    Convert(ConvertArgs),
    /// Emit (x, y) series for clustering, accuracy and early-exit charts.
    PlotData(PlotArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    Gaussian,
    Images,
    Model,
}

#[derive(Args, Debug)]
pub struct GenSynthArgs {
    #[arg(value_enum)]
    pub kind: SynthKind,
    /// Output file (`.fslt` for data, with a `.labels.json` sidecar; `.fslm` for the model).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub classes: usize,
    #[arg(long)]
    pub per_class: Option<usize>,
    /// Feature dimension (gaussian).
    #[arg(long, default_value_t = 256)]
    pub dim: usize,
    /// Per-coordinate mean separation in units of sigma (gaussian).
    #[arg(long, default_value_t = 1.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Pixel noise standard deviation (images).
    #[arg(long, default_value_t = 0.25)]
    pub noise: f64,
    /// Prototype patch contrast (images).
    #[arg(long, default_value_t = 0.3)]
    pub contrast: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Direct,
    Clustered,
}

#[derive(Args, Debug)]
pub struct ClusterArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub ch_sub: usize,
    #[arg(long, default_value_t = 16)]
    pub centroids: usize,
    /// Clustered model output.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the clustered layers as an FSLC file.
    #[arg(long)]
    pub codebooks: Option<PathBuf>,
    /// Per-layer report destination (default stdout).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// `[C, H, W]` image or `[n, C, H, W]` batch.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "clustered")]
    pub mode: Mode,
    /// `[n, sum of branch widths]` F32 output, with a `.json` sidecar.
    #[arg(long)]
    pub branches: PathBuf,
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    /// JSON `{"F": .., "D": .., "seed": ..}`.
    #[arg(long)]
    pub config: PathBuf,
    /// F32 rows (quantized per row) or I32 rows (used as-is).
    #[arg(long)]
    pub features: PathBuf,
    /// I32 `[n, D]` output, with a `.json` sidecar.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub feature_bits: u8,
}

#[derive(Args, Debug, Clone)]
pub struct HdcArgs {
    #[arg(long, default_value_t = 4096)]
    pub hv_dim: usize,
    /// Class hypervector precision (1 to 16).
    #[arg(long, default_value_t = 4)]
    pub class_bits: u8,
    /// Feature quantization precision before encoding.
    #[arg(long, default_value_t = 4)]
    pub feature_bits: u8,
    /// Class memory cap in bits.
    #[arg(long, default_value_t = fslhd_core::hdc::CLASS_MEMORY_BUDGET_BITS)]
    pub budget_bits: u64,
    #[arg(long, value_enum, default_value = "clustered")]
    pub mode: Mode,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// F32 feature rows `[n, F]` or images `[n, C, H, W]` (images need --model).
    #[arg(long)]
    pub data: PathBuf,
    /// Label sidecar (default: `<data>.labels.json`).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub hdc: HdcArgs,
    /// FSLH class memory output.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[arg(long)]
    pub memory: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Label sidecar used to report accuracy (default: `<data>.labels.json` if present).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// `Es=<start>,Ec=<consecutive>` or `off`.
    #[arg(long, default_value = "off")]
    pub early_exit: String,
    /// JSON-lines exit traces, one per image.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub feature_bits: u8,
    #[arg(long, value_enum, default_value = "clustered")]
    pub mode: Mode,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EpisodeArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub way: usize,
    #[arg(long, default_value_t = 5)]
    pub shot: usize,
    #[arg(long, default_value_t = 15)]
    pub query: usize,
    #[arg(long, default_value_t = 200)]
    pub episodes: usize,
    #[arg(long, default_value = "off")]
    pub early_exit: String,
    #[command(flatten)]
    pub hdc: HdcArgs,
    /// Summary destination (default stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-episode results.
    #[arg(long)]
    pub per_episode: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CostArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// `<way>x<shot>`.
    #[arg(long, default_value = "10x5")]
    pub episode: String,
    #[arg(long, default_value = "full,partial,knn,hdnn")]
    pub regimes: String,
    #[arg(long, default_value_t = 4096)]
    pub hv_dim: usize,
    #[arg(long, default_value_t = 5)]
    pub full_epochs: u64,
    #[arg(long, default_value_t = 15)]
    pub partial_epochs: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RawKind {
    /// Unsigned bytes, planar `C x H x W` per image, scaled by 1/255.
    RawRgb,
    /// Little-endian f32 rows.
    F32Rows,
}

#[derive(Args, Debug)]
pub struct ConvertArgs {
    #[arg(long, value_enum)]
    pub from: RawKind,
    #[arg(long)]
    pub input: PathBuf,
    /// `C,H,W` for raw-rgb.
    #[arg(long, default_value = "3,16,16")]
    pub shape: String,
    /// Row length for f32-rows.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Comma-separated labels to write as a sidecar.
    #[arg(long)]
    pub labels: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    /// Compression, op reduction and error against centroid count for one layer.
    Clustering,
    /// HDC and kNN accuracy against class hypervector bits.
    Accuracy,
    /// Average conv layers against accuracy for several E_c.
    Exit,
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    #[arg(value_enum)]
    pub kind: PlotKind,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Conv layer index (clustering).
    #[arg(long, default_value_t = 7)]
    pub layer: usize,
    #[arg(long, default_value_t = 64)]
    pub ch_sub: usize,
    #[arg(long, default_value = "2,4,8,16,32,64")]
    pub centroids: String,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, default_value = "1,2,4,8,16")]
    pub bits: String,
    #[arg(long, default_value_t = 1)]
    pub es: usize,
    #[arg(long, default_value = "1,2,3,4")]
    pub ec: String,
    #[arg(long, default_value_t = 5)]
    pub way: usize,
    #[arg(long, default_value_t = 5)]
    pub shot: usize,
    #[arg(long, default_value_t = 15)]
    pub query: usize,
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    #[command(flatten)]
    pub hdc: HdcArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<fslhd_core::Error>() {
            return match e.class() {
                ErrorClass::Validation => 2,
                ErrorClass::Numeric => 3,
                ErrorClass::Io => 4,
            };
        }
        if cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() || cause.is::<csv::Error>() {
            return 4;
        }
    }
    2
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FSLHD_LOG", "warn")).init();
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

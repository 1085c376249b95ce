//! Subcommand implementations.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use fslhd_core::clustering::{cluster_layer_with_stats, compression_ratio, encode_fslc, op_reduction_ratio, ConvShape};
use fslhd_core::cost::{cost_report, FtAssumptions};
use fslhd_core::crp::{required_bits, CrpConfig, CrpEncoder};
use fslhd_core::early_exit::{
    infer_branch, infer_early_exit, quantize_branch_feature, train_branches_from_features, ExitPolicy, PipelineConfig,
};
use fslhd_core::extractor::{
    bundled_model, load_fslm, run_model, save_fslm, BranchFeature, ConvWeights, ExecMode, Layer, ModelGraph,
    RunOptions, BUNDLED_INPUT, BUNDLED_SEED,
};
use fslhd_core::harness::{
    accuracy_vs_bits, clustering_tradeoff, exit_tradeoff, run_benchmark, synthetic_gaussian, synthetic_images,
    BranchBank, EpisodeSpec, FeatureDataset, GaussianSpec, HarnessConfig, ImageSpec, LabelSidecar, PlotSeries,
};
use fslhd_core::hdc::{load_fslh, save_fslh, Prediction};
use fslhd_core::numerics::{load_fslt, save_fslt, Tensor};
use fslhd_core::Error;

use crate::output::{emit, object, read_json, sidecar_path, to_rows, write_json};
use crate::Cli;
use crate::{
    ClusterArgs, Command, ConvertArgs, CostArgs, EncodeArgs, EpisodeArgs, ExtractArgs, GenSynthArgs, HdcArgs,
    InferArgs, Mode, PlotArgs, PlotKind, RawKind, SynthKind, TrainArgs,
};

const LABELS_SUFFIX: &str = ".labels.json";

pub fn run(cli: &Cli) -> Result<()> {
    let ctx = Ctx { cli };
    match &cli.command {
        Command::GenSynth(a) => ctx.gen_synth(a),
        Command::Cluster(a) => ctx.cluster(a),
        Command::Extract(a) => ctx.extract(a),
        Command::Encode(a) => ctx.encode(a),
        Command::Train(a) => ctx.train(a),
        Command::Infer(a) => ctx.infer(a),
        Command::Episode(a) => ctx.episode(a),
        Command::Cost(a) => ctx.cost(a),
        Command::Convert(a) => ctx.convert(a),
        Command::PlotData(a) => ctx.plot_data(a),
    }
}

struct Ctx<'a> {
    cli: &'a Cli,
}

fn run_options(mode: Mode) -> RunOptions {
    RunOptions::new(match mode {
        Mode::Direct => ExecMode::Direct,
        Mode::Clustered => ExecMode::Clustered,
    })
}

fn validation(msg: String) -> anyhow::Error {
    Error::InvalidArgument(msg).into()
}

/// Parses `Es=<n>,Ec=<n>` (either order) or `off`.
pub fn parse_policy(s: &str) -> Result<Option<ExitPolicy>> {
    if s.eq_ignore_ascii_case("off") || s.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    let (mut es, mut ec) = (None, None);
    for part in s.split(',') {
        let (k, v) =
            part.split_once('=').ok_or_else(|| validation(format!("early-exit entry '{part}' is not key=value")))?;
        let v: usize = v.trim().parse().map_err(|_| validation(format!("early-exit value '{v}' is not an integer")))?;
        match k.trim().to_ascii_lowercase().as_str() {
            "es" => es = Some(v),
            "ec" => ec = Some(v),
            other => return Err(validation(format!("unknown early-exit key '{other}', expected Es or Ec"))),
        }
    }
    match (es, ec) {
        (Some(es), Some(ec)) => Ok(Some(ExitPolicy::new(es, ec)?)),
        _ => Err(validation(format!("early-exit '{s}' needs both Es and Ec"))),
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',').map(|p| p.trim().parse().map_err(|_| validation(format!("bad {what} entry '{p}'")))).collect()
}

fn parse_episode(s: &str) -> Result<(usize, usize)> {
    let (w, k) = s.split_once(['x', 'X']).ok_or_else(|| validation(format!("episode '{s}' must look like 10x5")))?;
    let parse =
        |v: &str| v.trim().parse::<usize>().map_err(|_| validation(format!("episode '{s}' must look like 10x5")));
    Ok((parse(w)?, parse(k)?))
}

fn load_model(path: &Path) -> Result<ModelGraph> {
    load_fslm(path).with_context(|| format!("loading model {}", path.display()))
}

fn load_tensor(path: &Path) -> Result<Tensor> {
    load_fslt(path).with_context(|| format!("loading tensor {}", path.display()))
}

fn load_dataset(data: &Path, labels: Option<&Path>) -> Result<FeatureDataset> {
    let tensor = load_tensor(data)?;
    let labels_path = labels.map_or_else(|| sidecar_path(data, LABELS_SUFFIX), Path::to_path_buf);
    let sidecar: LabelSidecar = read_json(&labels_path)?;
    Ok(FeatureDataset::from_sidecar(tensor, sidecar)?)
}

fn pipeline(hdc: &HdcArgs, seed: u64) -> PipelineConfig {
    PipelineConfig {
        hv_dim: hdc.hv_dim,
        class_bits: hdc.class_bits,
        feature_bits: hdc.feature_bits,
        seed,
        budget_bits: hdc.budget_bits,
        run: run_options(hdc.mode),
    }
}

fn series_rows(series: &[PlotSeries]) -> Vec<Value> {
    series
        .iter()
        .flat_map(|s| {
            s.points.iter().map(
                move |p| json!({"series": s.name, "x_label": s.x_label, "y_label": s.y_label, "x": p[0], "y": p[1]}),
            )
        })
        .collect()
}

#[derive(Serialize)]
struct LayerReport {
    layer: usize,
    cout: usize,
    cin: usize,
    k: usize,
    ch_sub: usize,
    centroids: usize,
    groups: usize,
    compression_ratio: f64,
    op_reduction: f64,
    mean_squared_error: f64,
    max_iterations: usize,
}

#[derive(Serialize)]
struct InferRow {
    index: usize,
    class_id: usize,
    label: Option<usize>,
    exit_block: usize,
    layers_executed: usize,
    early: bool,
    distances: Vec<i64>,
}

impl Ctx<'_> {
    fn seed(&self, default: u64) -> u64 {
        self.cli.seed.unwrap_or(default)
    }

    fn emit<T: Serialize>(&self, report: &T, rows: Option<Vec<Value>>, out: Option<&Path>) -> Result<()> {
        emit(report, rows, self.cli.out_format, out)
    }

    fn gen_synth(&self, a: &GenSynthArgs) -> Result<()> {
        let dataset = match a.kind {
            SynthKind::Model => {
                let seed = self.seed(BUNDLED_SEED);
                let model = bundled_model(seed);
                save_fslm(&a.out, &model).with_context(|| format!("writing {}", a.out.display()))?;
                let report = json!({
                    "kind": "model",
                    "seed": seed,
                    "input_shape": model.input_shape(),
                    "branch_dims": model.branch_dims(),
                    "conv_layers": model.conv_layer_count(),
                });
                return self.emit(&report, None, None);
            }
            SynthKind::Gaussian => synthetic_gaussian(&GaussianSpec {
                n_classes: a.classes,
                per_class: a.per_class.unwrap_or(30),
                feature_dim: a.dim,
                separation: a.separation,
                sigma: a.sigma,
                seed: self.seed(0),
                ..GaussianSpec::default()
            })?,
            SynthKind::Images => synthetic_images(&ImageSpec {
                n_classes: a.classes,
                per_class: a.per_class.unwrap_or(20),
                shape: BUNDLED_INPUT,
                contrast: a.contrast,
                noise: a.noise,
                seed: self.seed(0),
            })?,
        };
        save_fslt(&a.out, dataset.data()).with_context(|| format!("writing {}", a.out.display()))?;
        write_json(&sidecar_path(&a.out, LABELS_SUFFIX), &dataset.sidecar())?;
        let report = json!({
            "kind": if dataset.is_image() { "images" } else { "gaussian" },
            "samples": dataset.len(),
            "classes": dataset.n_classes(),
            "sample_shape": dataset.sample_shape(),
            "provenance": dataset.provenance,
        });
        self.emit(&report, None, None)
    }

    fn cluster(&self, a: &ClusterArgs) -> Result<()> {
        let model = load_model(&a.model)?;
        let seed = self.seed(0);
        let clustered: Vec<_> = model
            .layers()
            .par_iter()
            .enumerate()
            .map(|(i, l)| match l {
                Layer::Conv(ConvWeights::Dense { weights, stride, padding }) => {
                    let (c, stats) = cluster_layer_with_stats(
                        weights,
                        a.ch_sub,
                        a.centroids,
                        seed.wrapping_add(i as u64),
                        *stride,
                        *padding,
                    )?;
                    Ok((Layer::Conv(ConvWeights::Clustered(c)), Some((i, stats))))
                }
                other => Ok((other.clone(), None)),
            })
            .collect::<fslhd_core::Result<_>>()?;
        let mut layers = Vec::with_capacity(clustered.len());
        let mut reports = Vec::new();
        for (layer, stats) in clustered {
            if let (Layer::Conv(ConvWeights::Clustered(c)), Some((i, s))) = (&layer, stats) {
                let shape = ConvShape { cout: c.cout, cin: c.cin, k: c.k };
                reports.push(LayerReport {
                    layer: i,
                    cout: c.cout,
                    cin: c.cin,
                    k: c.k,
                    ch_sub: c.ch_sub,
                    centroids: c.n_centroids,
                    groups: c.groups(),
                    compression_ratio: compression_ratio(shape, c.ch_sub, c.n_centroids, 8)?,
                    op_reduction: op_reduction_ratio(c.k, c.n_centroids, c.ch_sub.min(c.cin))?,
                    mean_squared_error: s.mean_squared_error(),
                    max_iterations: s.max_iterations,
                });
            }
            layers.push(layer);
        }
        if reports.is_empty() {
            bail!(validation("model has no dense convolutions to cluster".into()));
        }
        let out_model = ModelGraph::new(model.input_shape(), layers)?;
        save_fslm(&a.out, &out_model).with_context(|| format!("writing {}", a.out.display()))?;
        if let Some(path) = &a.codebooks {
            let cl: Vec<_> = out_model
                .layers()
                .iter()
                .filter_map(|l| match l {
                    Layer::Conv(ConvWeights::Clustered(c)) => Some(c.clone()),
                    _ => None,
                })
                .collect();
            std::fs::write(path, encode_fslc(&cl)).with_context(|| format!("writing {}", path.display()))?;
        }
        let rows = to_rows(&reports);
        self.emit(&json!({"seed": seed, "layers": reports}), Some(rows), a.report.as_deref())
    }

    fn extract(&self, a: &ExtractArgs) -> Result<()> {
        let model = load_model(&a.model)?;
        let input = load_tensor(&a.input)?;
        let images = match input.rank() {
            3 => input.reshaped([&[1], input.shape()].concat())?,
            4 => input,
            r => bail!(Error::ShapeMismatch(format!("input must be [C, H, W] or [n, C, H, W], got rank {r}"))),
        };
        let n = images.shape()[0];
        let per: usize = images.shape()[1..].iter().product();
        let values = images.as_f32().ok_or_else(|| Error::ShapeMismatch("input must be F32".into()))?;
        let opts = run_options(a.mode);
        let runs = (0..n)
            .into_par_iter()
            .map(|i| {
                let img = Tensor::from_f32(images.shape()[1..].to_vec(), values[i * per..(i + 1) * per].to_vec())?;
                run_model(&model, &img, opts)
            })
            .collect::<fslhd_core::Result<Vec<_>>>()?;
        let dims = model.branch_dims();
        let width: usize = dims.iter().sum();
        let mut flat = Vec::with_capacity(n * width);
        for r in &runs {
            for b in &r.branches {
                flat.extend_from_slice(&b.values);
            }
        }
        save_fslt(&a.branches, &Tensor::from_f32(vec![n, width], flat)?)
            .with_context(|| format!("writing {}", a.branches.display()))?;
        let ops: Vec<_> = runs.iter().map(|r| r.ops).collect();
        let meta = json!({
            "mode": opts.mode,
            "branch_dims": dims,
            "conv_layers": model.conv_layer_count(),
            "ops": ops,
        });
        write_json(&sidecar_path(&a.branches, ".json"), &meta)?;
        let rows = ops.iter().enumerate().map(|(i, o)| json!({"index": i, "ops": o, "total": o.total()})).collect();
        self.emit(&meta, Some(rows), None)
    }

    fn encode(&self, a: &EncodeArgs) -> Result<()> {
        let config: CrpConfig = read_json(&a.config)?;
        config.validate()?;
        let features = load_tensor(&a.features)?;
        if features.rank() != 2 {
            bail!(Error::ShapeMismatch(format!("features must be [n, F], got {:?}", features.shape())));
        }
        let (n, f) = (features.shape()[0], features.shape()[1]);
        let rows: Vec<Vec<i32>> = if let Some(v) = features.as_f32() {
            (0..n)
                .map(|i| quantize_branch_feature(&v[i * f..(i + 1) * f], config.feature_dim, a.feature_bits))
                .collect::<fslhd_core::Result<_>>()?
        } else if let Some(v) = features.as_i32() {
            if f != config.feature_dim {
                bail!(Error::ShapeMismatch(format!(
                    "integer rows have {f} entries, encoder takes {}",
                    config.feature_dim
                )));
            }
            v.chunks_exact(f).map(<[i32]>::to_vec).collect()
        } else {
            bail!(validation(format!("features must be F32 or I32, got {:?}", features.dtype())));
        };
        let encoder = CrpEncoder::cached(config)?;
        let hvs = rows.par_iter().map(|r| encoder.encode(r)).collect::<fslhd_core::Result<Vec<_>>>()?;
        let values: Vec<i32> = hvs.iter().flat_map(|h| h.values.iter().copied()).collect();
        let declared_bits = required_bits(&values);
        save_fslt(&a.out, &Tensor::from_i32(vec![n, config.hv_dim], values)?)
            .with_context(|| format!("writing {}", a.out.display()))?;
        let meta = json!({"declared_bits": declared_bits, "config": config, "rows": n, "feature_bits": a.feature_bits});
        write_json(&sidecar_path(&a.out, ".json"), &meta)?;
        self.emit(&meta, None, None)
    }

    fn bank(&self, dataset: &FeatureDataset, model: Option<&Path>, mode: Mode) -> Result<BranchBank> {
        let model = model.map(load_model).transpose()?;
        if dataset.is_image() && model.is_none() {
            bail!(validation("image data needs --model".into()));
        }
        Ok(BranchBank::extract(dataset, model.as_ref(), run_options(mode), None)?)
    }

    fn train(&self, a: &TrainArgs) -> Result<()> {
        let dataset = load_dataset(&a.data, a.labels.as_deref())?;
        let bank = self.bank(&dataset, a.model.as_deref(), a.hdc.mode)?;
        let samples = (0..dataset.len())
            .map(|i| Ok((bank.get(i)?.features.clone(), dataset.labels()[i])))
            .collect::<fslhd_core::Result<Vec<_>>>()?;
        let cfg = pipeline(&a.hdc, self.seed(0));
        let memory = train_branches_from_features(&samples, &bank.branch_dims, &cfg)?;
        save_fslh(&a.out, &memory).with_context(|| format!("writing {}", a.out.display()))?;
        let report = json!({
            "samples": samples.len(),
            "classes": memory.n_classes(),
            "branches": memory.branch_count(),
            "branch_dims": bank.branch_dims,
            "hv_dim": memory.hv_dim(),
            "class_bits": memory.bits(),
            "footprint_bits": memory.footprint_bits(),
            "budget_bits": cfg.budget_bits,
            "seed": cfg.seed,
        });
        self.emit(&report, None, None)
    }

    fn infer(&self, a: &InferArgs) -> Result<()> {
        let memory = load_fslh(&a.memory).with_context(|| format!("loading memory {}", a.memory.display()))?;
        let data = load_tensor(&a.data)?;
        let labels_path = a.labels.clone().unwrap_or_else(|| sidecar_path(&a.data, LABELS_SUFFIX));
        let labels: Option<Vec<usize>> = if a.labels.is_some() || labels_path.exists() {
            Some(read_json::<LabelSidecar>(&labels_path)?.labels)
        } else {
            None
        };
        let policy = parse_policy(&a.early_exit)?;
        let values = data.as_f32().ok_or_else(|| validation(format!("data must be F32, got {:?}", data.dtype())))?;
        let n = *data.shape().first().unwrap();
        if let Some(l) = &labels {
            if l.len() != n {
                bail!(Error::ShapeMismatch(format!("{} labels for {n} samples", l.len())));
            }
        }
        let per: usize = data.shape()[1..].iter().product();
        let sample = |i: usize| &values[i * per..(i + 1) * per];
        let results: Vec<(Prediction, Option<fslhd_core::early_exit::ExitTrace>)> = match data.rank() {
            2 => {
                if memory.branch_count() != 1 {
                    bail!(Error::ShapeMismatch(format!(
                        "feature rows need a single-branch memory, this one has {}",
                        memory.branch_count()
                    )));
                }
                (0..n)
                    .into_par_iter()
                    .map(|i| {
                        let f = BranchFeature { block: 0, values: sample(i).to_vec() };
                        Ok((infer_branch(&f, &memory, a.feature_bits)?, None))
                    })
                    .collect::<fslhd_core::Result<_>>()?
            }
            4 => {
                let model =
                    load_model(a.model.as_deref().ok_or_else(|| validation("image data needs --model".into()))?)?;
                let cfg =
                    PipelineConfig { feature_bits: a.feature_bits, run: run_options(a.mode), ..Default::default() };
                let policy = policy.unwrap_or_else(ExitPolicy::disabled);
                (0..n)
                    .into_par_iter()
                    .map(|i| {
                        let img = Tensor::from_f32(data.shape()[1..].to_vec(), sample(i).to_vec())?;
                        let (p, t) = infer_early_exit(&model, &memory, &img, &policy, &cfg)?;
                        Ok((p, Some(t)))
                    })
                    .collect::<fslhd_core::Result<_>>()?
            }
            r => bail!(Error::ShapeMismatch(format!("data must be [n, F] or [n, C, H, W], got rank {r}"))),
        };
        let rows: Vec<InferRow> = results
            .iter()
            .enumerate()
            .map(|(i, (p, t))| InferRow {
                index: i,
                class_id: p.class_id,
                label: labels.as_ref().map(|l| l[i]),
                exit_block: t.as_ref().map_or(p.branch, |t| t.exit_block),
                layers_executed: t.as_ref().map_or(0, |t| t.layers_executed),
                early: t.as_ref().is_some_and(|t| t.early),
                distances: p.distances.clone(),
            })
            .collect();
        if let Some(path) = &a.trace {
            let mut out = Vec::new();
            for (i, (_, t)) in results.iter().enumerate() {
                let line = json!({"index": i, "trace": t});
                serde_json::to_writer(&mut out, &line)?;
                out.push(b'\n');
            }
            std::fs::File::create(path)
                .and_then(|mut f| f.write_all(&out))
                .with_context(|| format!("writing {}", path.display()))?;
        }
        let accuracy = labels
            .as_ref()
            .filter(|_| n > 0)
            .map(|l| rows.iter().filter(|r| r.class_id == l[r.index]).count() as f64 / n as f64);
        let avg_layers =
            (n > 0 && data.rank() == 4).then(|| rows.iter().map(|r| r.layers_executed as f64).sum::<f64>() / n as f64);
        let table = to_rows(&rows);
        let report = object(vec![
            ("samples", json!(n)),
            ("accuracy", json!(accuracy)),
            ("avg_layers", json!(avg_layers)),
            ("early_exit", json!(policy)),
            ("predictions", json!(rows)),
        ]);
        self.emit(&report, Some(table), a.out.as_deref())
    }

    fn episode(&self, a: &EpisodeArgs) -> Result<()> {
        let dataset = load_dataset(&a.data, a.labels.as_deref())?;
        let bank = self.bank(&dataset, a.model.as_deref(), a.hdc.mode)?;
        let seed = self.seed(0);
        let template = EpisodeSpec { n_way: a.way, k_shot: a.shot, q_query: a.query, seed };
        let cfg = HarnessConfig { pipeline: pipeline(&a.hdc, seed), policy: parse_policy(&a.early_exit)? };
        let (results, summary) = run_benchmark(&dataset, &bank, &template, a.episodes, &cfg)?;
        if let Some(path) = &a.per_episode {
            emit(&results, Some(to_rows(&results)), self.cli.out_format, Some(path))?;
        }
        self.emit(&summary, None, a.out.as_deref())
    }

    fn cost(&self, a: &CostArgs) -> Result<()> {
        let model = load_model(&a.model)?;
        let (n_way, k_shot) = parse_episode(&a.episode)?;
        let regimes: Vec<&str> = a.regimes.split(',').map(str::trim).collect();
        let assumptions =
            FtAssumptions { full_epochs: a.full_epochs, partial_epochs: a.partial_epochs, ..FtAssumptions::default() };
        let report = cost_report(&model, n_way, k_shot, a.hv_dim, assumptions, &regimes)?;
        let rows = report
            .regimes
            .iter()
            .map(|r| {
                json!({
                    "regime": r.regime,
                    "total_ops": r.total_ops.to_string(),
                    "breakdown": r.breakdown,
                    "estimated": r.estimated,
                })
            })
            .collect();
        self.emit(&report, Some(rows), a.out.as_deref())
    }

    fn convert(&self, a: &ConvertArgs) -> Result<()> {
        let bytes = std::fs::read(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
        let tensor = match a.from {
            RawKind::RawRgb => {
                let shape: Vec<usize> = parse_list(&a.shape, "shape")?;
                if shape.len() != 3 || shape.contains(&0) {
                    bail!(validation(format!("--shape must be C,H,W, got '{}'", a.shape)));
                }
                let per: usize = shape.iter().product();
                if bytes.is_empty() || bytes.len() % per != 0 {
                    bail!(Error::Format(format!("{} bytes is not a whole number of {per}-byte images", bytes.len())));
                }
                let values = bytes.iter().map(|&b| b as f32 / 255.0).collect();
                Tensor::from_f32([&[bytes.len() / per][..], &shape].concat(), values)?
            }
            RawKind::F32Rows => {
                let dim = a.dim.ok_or_else(|| validation("f32-rows needs --dim".into()))?;
                if dim == 0 || bytes.is_empty() || bytes.len() % (4 * dim) != 0 {
                    bail!(Error::Format(format!("{} bytes is not a whole number of {dim}-float rows", bytes.len())));
                }
                let values = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
                Tensor::from_f32(vec![bytes.len() / (4 * dim), dim], values)?
            }
        };
        let mut report = json!({"shape": tensor.shape()});
        if let Some(l) = &a.labels {
            let labels: Vec<usize> = parse_list(l, "label")?;
            let provenance = format!(
                "converted from {}",
                a.input.file_name().map_or_else(String::new, |f| f.to_string_lossy().into_owned())
            );
            let dataset = FeatureDataset::new(tensor.clone(), labels, provenance)?;
            write_json(&sidecar_path(&a.out, LABELS_SUFFIX), &dataset.sidecar())?;
            report["classes"] = json!(dataset.n_classes());
        }
        save_fslt(&a.out, &tensor).with_context(|| format!("writing {}", a.out.display()))?;
        self.emit(&report, None, None)
    }

    fn plot_data(&self, a: &PlotArgs) -> Result<()> {
        let seed = self.seed(0);
        let load_or_bundled = |p: &Option<PathBuf>| match p {
            Some(p) => load_model(p),
            None => Ok(bundled_model(BUNDLED_SEED)),
        };
        let series = match a.kind {
            PlotKind::Clustering => {
                let model = load_or_bundled(&a.model)?.densified();
                let convs: Vec<&Tensor> = model
                    .layers()
                    .iter()
                    .filter_map(|l| match l {
                        Layer::Conv(ConvWeights::Dense { weights, .. }) => Some(weights),
                        _ => None,
                    })
                    .collect();
                let weights = convs
                    .get(a.layer)
                    .ok_or_else(|| validation(format!("conv layer {} of {}", a.layer, convs.len())))?;
                clustering_tradeoff(weights, a.ch_sub, &parse_list::<usize>(&a.centroids, "centroid")?, seed)?
            }
            PlotKind::Accuracy | PlotKind::Exit => {
                let data = a.data.as_deref().ok_or_else(|| anyhow!(validation("--data is required".into())))?;
                let dataset = load_dataset(data, a.labels.as_deref())?;
                let bank = self.bank(&dataset, a.model.as_deref(), a.hdc.mode)?;
                let template = EpisodeSpec { n_way: a.way, k_shot: a.shot, q_query: a.query, seed };
                let cfg = HarnessConfig { pipeline: pipeline(&a.hdc, seed), policy: None };
                if a.kind == PlotKind::Accuracy {
                    let bits: Vec<u8> = parse_list(&a.bits, "bits")?;
                    accuracy_vs_bits(&dataset, &bank, &template, a.episodes, &cfg, &bits)?
                } else {
                    let ec: Vec<usize> = parse_list(&a.ec, "E_c")?;
                    exit_tradeoff(&dataset, &bank, &template, a.episodes, &cfg, a.es, &ec)?
                }
            }
        };
        let rows = series_rows(&series);
        self.emit(&series, Some(rows), a.out.as_deref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_policies() {
        assert_eq!(parse_policy("off").unwrap(), None);
        assert_eq!(parse_policy("Es=2,Ec=3").unwrap(), Some(ExitPolicy::new(2, 3).unwrap()));
        assert_eq!(parse_policy("ec=1, es=4").unwrap(), Some(ExitPolicy::new(4, 1).unwrap()));
        assert!(parse_policy("Es=2").is_err());
        assert!(parse_policy("Es=0,Ec=1").is_err());
        assert!(parse_policy("Ex=1,Ec=1").is_err());
    }

    #[test]
    fn parses_episode_shapes() {
        assert_eq!(parse_episode("10x5").unwrap(), (10, 5));
        assert!(parse_episode("10-5").is_err());
    }
}

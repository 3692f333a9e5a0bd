//! Command-line front end: `cost`, `train`, `eval`, `quantize`, `bench`,
//! and `compare`.
//!
//! Every command is deterministic given its flags and seeds, except the
//! wall-clock fields of a benchmark report. Config files are flat
//! `key = value` text with the keys `learning_rate`, `epochs`,
//! `batch_size`, `seed`, `activation`, and `split_fraction`; flags override
//! file values.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::activation::Activation;
use crate::bench::{default_inputs, run_benchmark, BenchConfig, BenchError, BenchInputs};
use crate::cost::{
    classic_cost, separated_cost, separated_weights_diagonal_fusion,
    separation_reduces_multiplications, speedup_ratio, ConvShape, CostReport, CountingMode,
};
use crate::dataset::{load_csv, load_idx, split_dataset, synthetic_digits, Dataset, DatasetError};
use crate::model_io::{load_model, save_model, FloatWidth, ModelIoError, StoredModel};
use crate::network::{Layer, NetError, Network, StructureKind};
use crate::quant::{forward_fixed, quantize_network, FixedLayer, FixedNetwork, QuantError};
use crate::tensor::ShapeError;
use crate::train::{evaluate_error_rate, sgd_train, write_metrics_csv, TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Quant(#[from] QuantError),
    #[error(transparent)]
    ModelIo(#[from] ModelIoError),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Usage(String),
}

#[derive(Debug, Parser)]
#[command(
    name = "sepconv",
    about = "Train, cost, quantize, and benchmark classic vs. separated convolution layers",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print multiplication/addition/weight counts and the classic/separated ratio.
    Cost(CostArgs),
    /// Train one structure and write a model file plus per-epoch metrics.
    Train(TrainArgs),
    /// Evaluate a model file's error rate on a dataset.
    Eval(EvalArgs),
    /// Quantize a float model to q16 with calibration data.
    Quantize(QuantizeArgs),
    /// Time the forward paths of both structures on one input.
    Bench(BenchArgs),
    /// Train classic, separated-nofuse, and separated on one split and
    /// print the three-column error-rate comparison.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct ShapeArgs {
    /// Filter size K (filters are K x K).
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Input rows.
    #[arg(long, default_value_t = 14)]
    pub n: usize,
    /// Input cols.
    #[arg(long, default_value_t = 20)]
    pub m: usize,
    /// Input channels.
    #[arg(long, default_value_t = 1)]
    pub c: usize,
    /// Filter count.
    #[arg(long, default_value_t = 8)]
    pub l: usize,
}

impl ShapeArgs {
    fn to_shape(&self) -> Result<ConvShape, CliError> {
        let shape = ConvShape {
            k: self.k,
            n: self.n,
            m: self.m,
            c: self.c,
            l: self.l,
        };
        shape.validate().map_err(|e| {
            CliError::Usage(format!(
                "invalid shape (--k {} --n {} --m {} --c {} --l {}): {e}; \
                 all must be >= 1 with k <= n and k <= m",
                self.k, self.n, self.m, self.c, self.l
            ))
        })?;
        Ok(shape)
    }
}

#[derive(Debug, Args)]
pub struct CostArgs {
    #[command(flatten)]
    pub shape: ShapeArgs,
    /// Counting mode: `exact` (valid outputs only) or `paper` (asymptotic,
    /// all N*M positions).
    #[arg(long, default_value = "paper")]
    pub mode: String,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// IDX image file (pair with --labels).
    #[arg(long, requires = "labels")]
    pub images: Option<PathBuf>,
    /// IDX label file (pair with --images).
    #[arg(long, requires = "images")]
    pub labels: Option<PathBuf>,
    /// CSV dataset (label, then row-major pixels per line).
    #[arg(long, conflicts_with_all = ["images", "labels"])]
    pub csv: Option<PathBuf>,
    /// CSV shape when the file has no `# rows cols channels` header.
    #[arg(long, num_args = 3, value_names = ["ROWS", "COLS", "CHANNELS"])]
    pub csv_shape: Option<Vec<usize>>,
    /// Generate a synthetic digit set of this size instead of reading files.
    #[arg(long, conflicts_with_all = ["images", "labels", "csv"])]
    pub synthetic: Option<usize>,
    /// Seed for the synthetic generator.
    #[arg(long, default_value_t = 7)]
    pub data_seed: u64,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset, CliError> {
        if let (Some(images), Some(labels)) = (&self.images, &self.labels) {
            return Ok(load_idx(images, labels)?);
        }
        if let Some(csv) = &self.csv {
            let shape = self
                .csv_shape
                .as_ref()
                .map(|v| (v[0], v[1], v[2]));
            return Ok(load_csv(csv, shape)?);
        }
        let count = self.synthetic.unwrap_or(6000);
        Ok(synthetic_digits(count, self.data_seed))
    }
}

#[derive(Debug, Args)]
pub struct TrainOverrides {
    /// Flat key=value config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// identity, rectifier, or tanh.
    #[arg(long)]
    pub activation: Option<String>,
    #[arg(long)]
    pub split_fraction: Option<f64>,
}

impl TrainOverrides {
    fn resolve(&self) -> Result<TrainConfig, CliError> {
        let mut cfg = TrainConfig::default();
        if let Some(path) = &self.config {
            apply_config_file(&mut cfg, path)?;
        }
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.activation {
            cfg.activation = v.parse().map_err(CliError::Usage)?;
        }
        if let Some(v) = self.split_fraction {
            cfg.split_fraction = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct TopologyArgs {
    /// Convolution filter size of the trained network.
    #[arg(long, default_value_t = 5)]
    pub filter_size: usize,
    /// Convolution filter count of the trained network.
    #[arg(long, default_value_t = 8)]
    pub filters: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// classic, separated, or separated-nofuse.
    #[arg(long)]
    pub structure: String,
    /// Output model path.
    #[arg(long)]
    pub out: PathBuf,
    /// Metrics CSV path (default: <out>.metrics.csv).
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Store weights as f32 instead of f64.
    #[arg(long)]
    pub float32: bool,
    #[command(flatten)]
    pub topology: TopologyArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct QuantizeArgs {
    /// Float model to quantize.
    #[arg(long)]
    pub model: PathBuf,
    /// Output q16 model path.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of calibration samples taken from the dataset.
    #[arg(long, default_value_t = 256)]
    pub calibration_count: usize,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Model file; its conv layer supplies the shape (and float weights).
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub shape: ShapeArgs,
    #[arg(long, default_value_t = 30)]
    pub reps: usize,
    #[arg(long, default_value_t = 5)]
    pub warmup: usize,
    /// Forward passes per timed repetition.
    #[arg(long, default_value_t = 64)]
    pub inner: usize,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Also time the q16 fixed-point kernels.
    #[arg(long)]
    pub q16: bool,
    /// Also time single-precision forward passes.
    #[arg(long)]
    pub f32: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Directory for the three model files and metrics logs.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub topology: TopologyArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

fn apply_config_file(cfg: &mut TrainConfig, path: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path)?;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!(
                "{}:{}: expected `key = value`, got '{raw}'",
                path.display(),
                lineno + 1
            ))
        })?;
        let key = key.trim();
        let value = value.trim();
        let bad = |e: String| {
            CliError::Usage(format!("{}:{}: {e}", path.display(), lineno + 1))
        };
        match key {
            "learning_rate" => {
                cfg.learning_rate = value.parse().map_err(|e| bad(format!("{e}")))?
            }
            "epochs" => cfg.epochs = value.parse().map_err(|e| bad(format!("{e}")))?,
            "batch_size" => cfg.batch_size = value.parse().map_err(|e| bad(format!("{e}")))?,
            "seed" => cfg.seed = value.parse().map_err(|e| bad(format!("{e}")))?,
            "activation" => cfg.activation = value.parse::<Activation>().map_err(bad)?,
            "split_fraction" => {
                cfg.split_fraction = value.parse().map_err(|e| bad(format!("{e}")))?
            }
            other => return Err(bad(format!("unknown config key '{other}'"))),
        }
    }
    Ok(())
}

fn cost_table_row(name: &str, r: &CostReport, extra_weights: Option<u64>) -> String {
    let weights = match extra_weights {
        Some(d) => format!("{} ({} with diagonal fusion)", r.weights, d),
        None => r.weights.to_string(),
    };
    format!(
        "{name:<11} {:>16} {:>14} {:>10} {weights}",
        r.multiplications,
        r.additions,
        r.biases
    )
}

pub fn cmd_cost(args: &CostArgs) -> Result<String, CliError> {
    let shape = args.shape.to_shape()?;
    let mode: CountingMode = args.mode.parse().map_err(CliError::Usage)?;
    let classic = classic_cost(&shape, mode);
    let separated = separated_cost(&shape, mode);
    let ratio = speedup_ratio(&shape, mode);
    let mut out = String::new();
    writeln!(
        out,
        "configuration: K={} N={} M={} C={} L={}",
        shape.k, shape.n, shape.m, shape.c, shape.l
    )
    .unwrap();
    let mode_note = match mode {
        CountingMode::ExactValid => "exact-valid (only the (N-K+1)x(M-K+1) outputs produced)",
        CountingMode::Asymptotic => "asymptotic (all N*M positions, as the closed forms count)",
    };
    writeln!(out, "counting mode: {mode_note}").unwrap();
    writeln!(
        out,
        "output size: {}x{} per filter",
        classic.output_h, classic.output_w
    )
    .unwrap();
    writeln!(
        out,
        "{:<11} {:>16} {:>14} {:>10} weights",
        "structure", "multiplications", "additions", "biases"
    )
    .unwrap();
    writeln!(out, "{}", cost_table_row("classic", &classic, None)).unwrap();
    writeln!(
        out,
        "{}",
        cost_table_row(
            "separated",
            &separated,
            Some(separated_weights_diagonal_fusion(&shape))
        )
    )
    .unwrap();
    writeln!(
        out,
        "per-pixel multiplications: classic {:.4}, separated {:.4}",
        classic.per_pixel_multiplications(),
        separated.per_pixel_multiplications()
    )
    .unwrap();
    writeln!(
        out,
        "multiplication ratio (classic / separated): {ratio:.4}"
    )
    .unwrap();
    if !separation_reduces_multiplications(shape.k, shape.c, shape.l) {
        writeln!(
            out,
            "note: the separated structure multiplies MORE at this shape; \
             it wins only when K*K*C > K*C + K + L"
        )
        .unwrap();
    }
    Ok(out)
}

struct TrainedRun {
    net: Network,
    test_err: f64,
}

fn train_structure(
    kind: StructureKind,
    train: &Dataset,
    test: &Dataset,
    cfg: &TrainConfig,
    topology: &TopologyArgs,
    model_path: &Path,
    metrics_path: &Path,
    width: FloatWidth,
) -> Result<TrainedRun, CliError> {
    let (h, w, c) = train.image_shape().ok_or(TrainError::EmptyDataset)?;
    let net = Network::digit_net(
        kind,
        h,
        w,
        c,
        train.class_count(),
        topology.filter_size,
        topology.filters,
        cfg.activation,
        cfg.seed,
    );
    let (net, metrics) = sgd_train(net, train, Some(test), cfg)?;
    write_metrics_csv(metrics_path, &metrics)?;
    save_model(model_path, &StoredModel::Float(net.clone()), width)?;
    let test_err = evaluate_error_rate(&net, test)?;
    Ok(TrainedRun { net, test_err })
}

pub fn cmd_train(args: &TrainArgs) -> Result<String, CliError> {
    let kind: StructureKind = args.structure.parse().map_err(CliError::Usage)?;
    let cfg = args.overrides.resolve()?;
    let data = args.data.load()?;
    let (train, test) = split_dataset(&data, cfg.split_fraction, cfg.seed)?;
    let metrics_path = args
        .metrics
        .clone()
        .unwrap_or_else(|| default_metrics_path(&args.out));
    let width = if args.float32 {
        FloatWidth::F32
    } else {
        FloatWidth::F64
    };
    let run = train_structure(
        kind,
        &train,
        &test,
        &cfg,
        &args.topology,
        &args.out,
        &metrics_path,
        width,
    )?;
    let mut out = String::new();
    writeln!(
        out,
        "trained {} on {} samples ({} epochs, lr {}, batch {}, seed {})",
        kind.label(),
        train.len(),
        cfg.epochs,
        cfg.learning_rate,
        cfg.batch_size,
        cfg.seed
    )
    .unwrap();
    writeln!(out, "test error rate: {:.4}", run.test_err).unwrap();
    writeln!(out, "model written to {}", args.out.display()).unwrap();
    writeln!(out, "metrics written to {}", metrics_path.display()).unwrap();
    Ok(out)
}

fn default_metrics_path(model: &Path) -> PathBuf {
    let mut name = model.file_name().unwrap_or_default().to_os_string();
    name.push(".metrics.csv");
    model.with_file_name(name)
}

fn fixed_error_rate(net: &FixedNetwork, data: &Dataset) -> Result<f64, CliError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset.into());
    }
    let mut wrong = 0usize;
    for (img, &label) in data.images().iter().zip(data.labels()) {
        if forward_fixed(net, img)?.prediction != label {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / data.len() as f64)
}

pub fn cmd_eval(args: &EvalArgs) -> Result<String, CliError> {
    let data = args.data.load()?;
    let model = load_model(&args.model)?;
    let (kind, err) = match &model {
        StoredModel::Float(net) => ("float", evaluate_error_rate(net, &data)?),
        StoredModel::Fixed(net) => ("q16", fixed_error_rate(net, &data)?),
    };
    Ok(format!(
        "{} model {}: error rate {:.4} on {} samples\n",
        kind,
        args.model.display(),
        err,
        data.len()
    ))
}

pub fn cmd_quantize(args: &QuantizeArgs) -> Result<String, CliError> {
    let data = args.data.load()?;
    let model = load_model(&args.model)?;
    let StoredModel::Float(net) = model else {
        return Err(CliError::Usage(
            "model is already quantized; pass a float model".into(),
        ));
    };
    let calibration: Vec<_> = data
        .images()
        .iter()
        .take(args.calibration_count.max(1))
        .cloned()
        .collect();
    let fixed = quantize_network(&net, &calibration)?;
    save_model(&args.out, &StoredModel::Fixed(fixed.clone()), FloatWidth::F64)?;
    let mut agree = 0usize;
    for img in data.images() {
        if net.predict(img)? == forward_fixed(&fixed, img)?.prediction {
            agree += 1;
        }
    }
    let mut out = String::new();
    writeln!(
        out,
        "quantized {} -> {} ({} calibration samples)",
        args.model.display(),
        args.out.display(),
        calibration.len()
    )
    .unwrap();
    writeln!(
        out,
        "float/q16 argmax agreement: {:.2}% of {} samples",
        100.0 * agree as f64 / data.len() as f64,
        data.len()
    )
    .unwrap();
    Ok(out)
}

fn shape_from_model(model: &StoredModel, n: usize, m: usize) -> Option<(ConvShape, Option<Layer>)> {
    match model {
        StoredModel::Float(net) => net.layers.iter().find_map(|layer| match layer {
            Layer::Classic(conv) => Some((
                ConvShape {
                    k: conv.filters.kh(),
                    n,
                    m,
                    c: conv.filters.in_channels(),
                    l: conv.filters.count(),
                },
                Some(layer.clone()),
            )),
            Layer::Separated { params, .. } => Some((
                ConvShape {
                    k: params.k(),
                    n,
                    m,
                    c: params.in_channels(),
                    l: params.count(),
                },
                Some(layer.clone()),
            )),
            _ => None,
        }),
        StoredModel::Fixed(net) => net.layers.iter().find_map(|layer| match layer {
            FixedLayer::Classic(c) => Some((
                ConvShape {
                    k: c.kh,
                    n,
                    m,
                    c: c.in_channels,
                    l: c.count,
                },
                None,
            )),
            FixedLayer::Separated(s) => Some((
                ConvShape {
                    k: s.k,
                    n,
                    m,
                    c: s.in_channels,
                    l: s.count,
                },
                None,
            )),
            _ => None,
        }),
    }
}

pub fn cmd_bench(args: &BenchArgs) -> Result<String, CliError> {
    let mut include_q16 = args.q16;
    let (shape, model_layer) = match &args.model {
        Some(path) => {
            let model = load_model(path)?;
            if matches!(model, StoredModel::Fixed(_)) {
                include_q16 = true;
            }
            let (shape, layer) = shape_from_model(&model, args.shape.n, args.shape.m)
                .ok_or_else(|| {
                    CliError::Usage("model contains no convolutional layer to benchmark".into())
                })?;
            shape.validate().map_err(CliError::Shape)?;
            (shape, layer)
        }
        None => (args.shape.to_shape()?, None),
    };
    let mut inputs: BenchInputs = default_inputs(&shape, args.seed)?;
    match model_layer {
        Some(Layer::Classic(conv)) => inputs.classic = conv,
        Some(Layer::Separated { params, .. }) => inputs.separated = params,
        _ => {}
    }
    let cfg = BenchConfig {
        warmup: args.warmup,
        reps: args.reps,
        inner: args.inner,
        threads: args.threads,
        seed: args.seed,
        include_q16,
        include_f32: args.f32,
    };
    let report = run_benchmark(&inputs, &cfg)?;
    let mut out = String::new();
    writeln!(
        out,
        "benchmark: K={} N={} M={} C={} L={} | {} reps x {} forwards, {} warmup, {} thread(s)",
        report.shape.k,
        report.shape.n,
        report.shape.m,
        report.shape.c,
        report.shape.l,
        report.reps,
        report.inner,
        report.warmup,
        report.threads
    )
    .unwrap();
    writeln!(out, "{:<16} {:>12} {:>12}", "variant", "median", "iqr").unwrap();
    for v in &report.variants {
        writeln!(
            out,
            "{:<16} {:>9.3} ms {:>9.3} ms",
            v.label,
            v.median_ns as f64 / 1e6,
            v.iqr_ns as f64 / 1e6
        )
        .unwrap();
    }
    writeln!(
        out,
        "multiplications per forward (exact): classic {}, separated {}",
        report.classic_cost.multiplications, report.separated_cost.multiplications
    )
    .unwrap();
    writeln!(
        out,
        "theoretical multiplication ratio (per-pixel): {:.4}",
        report.theoretical_ratio
    )
    .unwrap();
    writeln!(
        out,
        "measured time ratio (classic / separated): {:.4}",
        report.measured_ratio
    )
    .unwrap();
    Ok(out)
}

pub fn cmd_compare(args: &CompareArgs) -> Result<String, CliError> {
    let cfg = args.overrides.resolve()?;
    let data = args.data.load()?;
    let (train, test) = split_dataset(&data, cfg.split_fraction, cfg.seed)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let mut rows = Vec::new();
    for kind in [
        StructureKind::Classic,
        StructureKind::SeparatedNoFuse,
        StructureKind::Separated,
    ] {
        let model_path = args.out_dir.join(format!("{}.sepc", kind.label()));
        let metrics_path = args.out_dir.join(format!("{}.metrics.csv", kind.label()));
        let run = train_structure(
            kind,
            &train,
            &test,
            &cfg,
            &args.topology,
            &model_path,
            &metrics_path,
            FloatWidth::F64,
        )?;
        rows.push((kind, run.test_err));
        drop(run.net);
    }
    let mut out = String::new();
    writeln!(
        out,
        "comparison on {} train / {} test samples (seed {}, {} epochs)",
        train.len(),
        test.len(),
        cfg.seed,
        cfg.epochs
    )
    .unwrap();
    writeln!(out, "{:<18} {:>12} {:>12}", "structure", "test error", "accuracy").unwrap();
    for (kind, err) in &rows {
        writeln!(
            out,
            "{:<18} {:>12.4} {:>11.2}%",
            kind.label(),
            err,
            (1.0 - err) * 100.0
        )
        .unwrap();
    }
    writeln!(out, "models and metrics written to {}", args.out_dir.display()).unwrap();
    Ok(out)
}

/// Runs one parsed command, printing its report to stdout.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let text = match &cli.command {
        Command::Cost(args) => cmd_cost(args)?,
        Command::Train(args) => cmd_train(args)?,
        Command::Eval(args) => cmd_eval(args)?,
        Command::Quantize(args) => cmd_quantize(args)?,
        Command::Bench(args) => cmd_bench(args)?,
        Command::Compare(args) => cmd_compare(args)?,
    };
    print!("{text}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cost_args(k: usize, c: usize, l: usize, mode: &str) -> CostArgs {
        CostArgs {
            shape: ShapeArgs {
                k,
                n: 14,
                m: 20,
                c,
                l,
            },
            mode: mode.to_string(),
        }
    }

    #[test]
    fn cost_reports_the_reference_ratio() {
        let out = cmd_cost(&cost_args(5, 1, 8, "paper")).unwrap();
        assert!(out.contains("multiplication ratio (classic / separated): 1.3889"));
        assert!(out.contains("56000"));
        assert!(out.contains("40320"));
    }

    #[test]
    fn cost_warns_below_break_even() {
        let out = cmd_cost(&cost_args(1, 1, 1, "paper")).unwrap();
        assert!(out.contains("ratio (classic / separated): 0.3333"));
        assert!(out.contains("separated structure multiplies MORE"));
    }

    #[test]
    fn cost_rejects_invalid_shape() {
        let args = CostArgs {
            shape: ShapeArgs {
                k: 30,
                n: 14,
                m: 20,
                c: 1,
                l: 8,
            },
            mode: "paper".into(),
        };
        assert!(matches!(cmd_cost(&args), Err(CliError::Usage(_))));
    }

    #[test]
    fn config_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.cfg");
        std::fs::write(
            &path,
            "learning_rate = 0.25\nepochs = 3\nbatch_size = 4\nseed = 9\nactivation = tanh\nsplit_fraction = 0.8\n# comment\n",
        )
        .unwrap();
        let mut cfg = TrainConfig::default();
        apply_config_file(&mut cfg, &path).unwrap();
        assert_eq!(cfg.learning_rate, 0.25);
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.batch_size, 4);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.activation, Activation::Tanh);
        assert_eq!(cfg.split_fraction, 0.8);
    }

    #[test]
    fn config_file_rejects_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.cfg");
        std::fs::write(&path, "momentum = 0.9\n").unwrap();
        let mut cfg = TrainConfig::default();
        assert!(matches!(
            apply_config_file(&mut cfg, &path),
            Err(CliError::Usage(_))
        ));
    }
}

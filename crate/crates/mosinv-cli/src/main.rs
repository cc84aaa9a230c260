//! `mosinv`: generate synthetic power-MOSFET transfer-curve datasets, train
//! the channel-length regressor, evaluate it per split, and predict from a
//! single curve.
//!
//! Configuration precedence is flags > config file > defaults. Successful
//! commands print machine-parsable `key=value` lines. Exit codes: 0 success,
//! 2 invalid arguments or configuration, 3 generation failure, 4 I/O or
//! corrupt-file failure, 5 shape/schema/split mismatch, 6 numerical failure
//! during training.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use mosinv::dataset::{
    build_dataset, default_v_gs_list, read_dataset, write_dataset, DatasetError, ParamRanges,
    Split,
};
use mosinv::level3::VdsGrid;
use mosinv::nn::Activation;
use mosinv::trainer::{
    evaluate, load_checkpoint, predict_length, save_checkpoint, train, write_report, Checkpoint,
    DataContext, SplitMetrics, TrainError, TrainSettings, CHECKPOINT_SCHEMA_VERSION,
};

const EXIT_USAGE: u8 = 2;
const EXIT_GENERATION: u8 = 3;
const EXIT_IO: u8 = 4;
const EXIT_MISMATCH: u8 = 5;
const EXIT_NUMERICAL: u8 = 6;

#[derive(Parser)]
#[command(name = "mosinv", version, about = "Synthetic MOSFET curves and channel-length retrieval")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic dataset directory
    Generate(GenerateArgs),
    /// Train a regressor on a generated dataset
    Train(TrainArgs),
    /// Evaluate a trained model on one dataset split
    Eval(EvalArgs),
    /// Predict channel length from one raw transfer curve
    Predict(PredictArgs),
}

/// Optional config file mirroring every flag; flags take precedence.
/// Parameter-range overrides are config-file-only.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    devices: Option<u32>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    vds_start: Option<f64>,
    vds_stop: Option<f64>,
    vds_step: Option<f64>,
    vgs_list: Option<Vec<f64>>,
    ranges: Option<ParamRanges>,
    data: Option<PathBuf>,
    model: Option<PathBuf>,
    report: Option<PathBuf>,
    train_seed: Option<u64>,
    epochs: Option<u32>,
    batch_size: Option<usize>,
    lr: Option<f64>,
    hidden: Option<Vec<usize>>,
    best_val: Option<bool>,
    split: Option<String>,
    curve: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    /// JSON config file providing defaults for any flag
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of devices to sample (default 5000)
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    devices: Option<u32>,
    /// Dataset master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output dataset directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// First drain-source voltage of the sweep (default 0.1)
    #[arg(long)]
    vds_start: Option<f64>,
    /// Last drain-source voltage of the sweep (default 10.0)
    #[arg(long)]
    vds_stop: Option<f64>,
    /// Sweep increment (default 0.1)
    #[arg(long)]
    vds_step: Option<f64>,
    /// Comma-separated gate voltages (default 1,2,...,12)
    #[arg(long)]
    vgs_list: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    /// JSON config file providing defaults for any flag
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory produced by `generate`
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output model checkpoint path
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output per-epoch report CSV path
    #[arg(long)]
    report: Option<PathBuf>,
    /// Training seed
    #[arg(long)]
    seed: Option<u64>,
    /// Training epochs (default 100)
    #[arg(long)]
    epochs: Option<u32>,
    /// Mini-batch size (default 32)
    #[arg(long)]
    batch_size: Option<usize>,
    /// Adam learning rate (default 0.0001)
    #[arg(long)]
    lr: Option<f64>,
    /// Comma-separated hidden layer widths (default 128,64,32,16)
    #[arg(long)]
    hidden: Option<String>,
    /// Keep the epoch with the best validation MSE instead of the last
    #[arg(long)]
    best_val: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// JSON config file providing defaults for any flag
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory
    #[arg(long)]
    data: Option<PathBuf>,
    /// Model checkpoint path
    #[arg(long)]
    model: Option<PathBuf>,
    /// Split to evaluate: train, val, or test
    #[arg(long)]
    split: Option<String>,
}

#[derive(Args)]
struct PredictArgs {
    /// JSON config file providing defaults for any flag
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model checkpoint path
    #[arg(long)]
    model: Option<PathBuf>,
    /// File holding one curve as comma-separated ampere values
    #[arg(long)]
    curve: Option<PathBuf>,
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn new(code: u8, message: impl Into<String>) -> Self {
        CliError { code, message: message.into() }
    }
}

fn dataset_error(e: DatasetError) -> CliError {
    let code = match &e {
        DatasetError::InvalidRange { .. } => EXIT_USAGE,
        DatasetError::GenerationFailure { .. } => EXIT_GENERATION,
        DatasetError::Io(_) | DatasetError::CorruptData { .. } => EXIT_IO,
        DatasetError::SchemaMismatch { .. } => EXIT_MISMATCH,
    };
    CliError::new(code, e.to_string())
}

fn train_error(e: TrainError) -> CliError {
    let code = match &e {
        TrainError::InvalidConfig { .. } => EXIT_USAGE,
        TrainError::DataModelMismatch { .. }
        | TrainError::EmptySplit { .. }
        | TrainError::SchemaMismatch { .. } => EXIT_MISMATCH,
        TrainError::NumericalFailure { .. } => EXIT_NUMERICAL,
        TrainError::Io(_)
        | TrainError::CorruptCheckpoint { .. }
        | TrainError::CorruptReport { .. }
        | TrainError::Nn(_) => EXIT_IO,
    };
    CliError::new(code, e.to_string())
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig, CliError> {
    let Some(path) = path else { return Ok(RunConfig::default()) };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::new(EXIT_IO, format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::new(EXIT_USAGE, format!("invalid config {}: {e}", path.display())))
}

fn require<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| {
        CliError::new(EXIT_USAGE, format!("missing required {flag} (flag or config file)"))
    })
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>, CliError> {
    let mut out = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        out.push(part.parse::<T>().map_err(|_| {
            CliError::new(EXIT_USAGE, format!("cannot parse {what} entry '{part}'"))
        })?);
    }
    if out.is_empty() {
        return Err(CliError::new(EXIT_USAGE, format!("{what} list is empty")));
    }
    Ok(out)
}

fn print_metrics(prefix: &str, m: &SplitMetrics) {
    println!("{prefix}mse={}", m.mse);
    println!("{prefix}msle={}", m.msle);
    println!("{prefix}mae={}", m.mae);
    println!("{prefix}mae_meters={}", m.mae_meters);
    println!("{prefix}mape_percent_meters={}", m.mape_percent_meters);
}

fn cmd_generate(args: GenerateArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.config)?;
    let devices = args.devices.or(cfg.devices).unwrap_or(5000);
    let seed = require(args.seed.or(cfg.seed), "--seed")?;
    let out = require(args.out.or(cfg.out), "--out")?;
    let grid = VdsGrid {
        start: args.vds_start.or(cfg.vds_start).unwrap_or(0.1),
        stop: args.vds_stop.or(cfg.vds_stop).unwrap_or(10.0),
        step: args.vds_step.or(cfg.vds_step).unwrap_or(0.1),
    };
    let v_gs_list = match args.vgs_list {
        Some(text) => parse_list::<f64>(&text, "--vgs-list")?,
        None => cfg.vgs_list.unwrap_or_else(default_v_gs_list),
    };
    let ranges = cfg.ranges.unwrap_or_default();

    let dataset =
        build_dataset(devices, &ranges, &grid, &v_gs_list, seed).map_err(dataset_error)?;
    write_dataset(&dataset, &out).map_err(dataset_error)?;

    println!("out={}", out.display());
    println!("devices={devices}");
    println!("seed={seed}");
    println!("samples={}", dataset.samples.len());
    println!("retries={}", dataset.manifest.resample_retries);
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.config)?;
    let data = require(args.data.or(cfg.data), "--data")?;
    let out = require(args.out.or(cfg.model.clone()).or(cfg.out), "--out")?;
    let report_path = require(args.report.or(cfg.report), "--report")?;
    let seed = require(args.seed.or(cfg.train_seed), "--seed")?;

    let defaults = TrainSettings::default();
    let hidden_widths = match args.hidden {
        Some(text) => parse_list::<usize>(&text, "--hidden")?,
        None => cfg.hidden.unwrap_or(defaults.hidden_widths),
    };
    let settings = TrainSettings {
        epochs: args.epochs.or(cfg.epochs).unwrap_or(defaults.epochs),
        batch_size: args.batch_size.or(cfg.batch_size).unwrap_or(defaults.batch_size),
        learning_rate: args.lr.or(cfg.lr).unwrap_or(defaults.learning_rate),
        hidden_widths,
        hidden_activation: Activation::Relu,
        select_best_val: args.best_val || cfg.best_val.unwrap_or(false),
    };

    let dataset = read_dataset(&data).map_err(dataset_error)?;
    let (model, report) = train(&dataset, &settings, seed).map_err(train_error)?;

    let checkpoint = Checkpoint {
        schema_version: CHECKPOINT_SCHEMA_VERSION,
        model,
        data_context: DataContext {
            normalization: dataset.manifest.normalization.clone(),
            target_bounds: dataset.manifest.target_bounds,
            grid: dataset.manifest.grid,
        },
        train_seed: seed,
    };
    save_checkpoint(&checkpoint, &out).map_err(train_error)?;
    write_report(&report, &report_path).map_err(train_error)?;

    println!("model={}", out.display());
    println!("report={}", report_path.display());
    println!("train_seed={seed}");
    println!("epochs={}", settings.epochs);
    match evaluate(&checkpoint.model, &dataset, Split::Test) {
        Ok(m) => print_metrics("final_test_", &m),
        Err(TrainError::EmptySplit { .. }) => println!("final_test=empty_split"),
        Err(e) => return Err(train_error(e)),
    }
    if let Some(last) = report.rows.last() {
        println!("seconds_total={}", last.seconds);
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.config)?;
    let data = require(args.data.or(cfg.data), "--data")?;
    let model_path = require(args.model.or(cfg.model), "--model")?;
    let split_text = require(args.split.or(cfg.split), "--split")?;
    let split: Split = split_text
        .parse()
        .map_err(|reason: String| CliError::new(EXIT_MISMATCH, reason))?;

    let checkpoint = load_checkpoint(&model_path).map_err(train_error)?;
    let dataset = read_dataset(&data).map_err(dataset_error)?;
    let metrics = evaluate(&checkpoint.model, &dataset, split).map_err(train_error)?;

    println!("split={split}");
    print_metrics("", &metrics);
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.config)?;
    let model_path = require(args.model.or(cfg.model), "--model")?;
    let curve_path = require(args.curve.or(cfg.curve), "--curve")?;

    let checkpoint = load_checkpoint(&model_path).map_err(train_error)?;
    let curve = read_curve(&curve_path)?;
    let l = predict_length(&checkpoint.model, &curve, &checkpoint.data_context)
        .map_err(train_error)?;
    println!("l_meters={l}");
    Ok(())
}

/// Parses one curve file: ampere values separated by commas and/or line
/// breaks.
fn read_curve(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::new(EXIT_IO, format!("cannot read curve {}: {e}", path.display())))?;
    let mut values = Vec::new();
    for token in text.split(|c: char| c == ',' || c.is_whitespace()) {
        if token.is_empty() {
            continue;
        }
        values.push(token.parse::<f64>().map_err(|_| {
            CliError::new(EXIT_IO, format!("cannot parse current value '{token}'"))
        })?);
    }
    if values.is_empty() {
        return Err(CliError::new(EXIT_IO, "curve file holds no values".to_string()));
    }
    Ok(values)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Predict(args) => cmd_predict(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

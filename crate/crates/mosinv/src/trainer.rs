//! Training orchestration: epoch loop with seeded shuffling, per-epoch
//! metrics on every split, report and checkpoint I/O, and single-curve
//! inference with denormalization.
//!
//! All randomness of a run derives from one `train_seed`: the weight
//! initialization seed and the per-epoch shuffle seeds are mixed from it,
//! so (dataset bytes, settings, train_seed) determine the trained weights
//! and the report rows bitwise. Wall-clock seconds are the only
//! non-reproducible report column.

use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{denormalize_label, normalize_features, Dataset, Normalization, Split, TargetBounds};
use crate::level3::VdsGrid;
use crate::nn::{
    adam_step, backward, init_model, metrics, Activation, AdamState, ForwardCache, Gradients,
    MlpConfig, MlpModel, NnError,
};
use crate::seed::{mix, DOMAIN_INIT, DOMAIN_SHUFFLE};

/// On-disk schema version for model checkpoints.
pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

const REPORT_HEADER: &str = "epoch,split,mse,msle,mae,mae_meters,mape_percent_meters,seconds";

/// Training hyperparameters. Hidden widths exclude the input and output
/// layers, which are fixed by the data (feature width in, one unit out).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub epochs: u32,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden_widths: Vec<usize>,
    pub hidden_activation: Activation,
    /// Return the epoch with the lowest validation MSE instead of the
    /// final epoch.
    pub select_best_val: bool,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-4,
            hidden_widths: vec![128, 64, 32, 16],
            hidden_activation: Activation::Relu,
            select_best_val: false,
        }
    }
}

impl TrainSettings {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig { reason: "batch size must be positive".into() });
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(TrainError::InvalidConfig {
                reason: format!("learning rate must be positive and finite, got {}", self.learning_rate),
            });
        }
        if self.hidden_widths.iter().any(|&w| w == 0) {
            return Err(TrainError::InvalidConfig {
                reason: "hidden layer widths must be positive".into(),
            });
        }
        Ok(())
    }
}

/// Per-epoch, per-split error measures. Normalized-space mse/msle/mae plus
/// meter-space absolute and percentage error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitMetrics {
    pub mse: f64,
    pub msle: f64,
    pub mae: f64,
    pub mae_meters: f64,
    pub mape_percent_meters: f64,
}

/// One report line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportRow {
    pub epoch: u32,
    pub split: Split,
    pub mse: f64,
    pub msle: f64,
    pub mae: f64,
    pub mae_meters: f64,
    pub mape_percent_meters: f64,
    /// Wall-clock seconds since training started; not reproducible.
    pub seconds: f64,
}

/// Full training trace plus the seeds that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub train_seed: u64,
    pub init_seed: u64,
    pub rows: Vec<ReportRow>,
}

/// Normalization context a model needs at inference time, frozen from the
/// training dataset's manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataContext {
    pub normalization: Normalization,
    pub target_bounds: TargetBounds,
    pub grid: VdsGrid,
}

/// Self-contained model file: weights plus everything inference needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub model: MlpModel,
    pub data_context: DataContext,
    pub train_seed: u64,
}

/// Training and model-I/O failures.
#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training configuration: {reason}")]
    InvalidConfig { reason: String },
    #[error("model expects {model} inputs but the data provides {data}")]
    DataModelMismatch { model: usize, data: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NumericalFailure { epoch: u32, batch: usize },
    #[error("split '{split}' has no samples")]
    EmptySplit { split: Split },
    #[error("unsupported checkpoint schema version {found} (expected {expected})")]
    SchemaMismatch { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {reason}")]
    CorruptCheckpoint { reason: String },
    #[error("corrupt report at line {line}: {reason}")]
    CorruptReport { line: usize, reason: String },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Metrics from precomputed predictions; the evaluation path every caller
/// shares, and a seam for oracle tests (feed the targets as predictions).
///
/// `preds` and `targets` are in normalized label space; `labels_m` are the
/// true channel lengths in meters.
pub fn split_metrics_from_predictions(
    preds: &[f64],
    targets: &[f64],
    labels_m: &[f64],
    bounds: &TargetBounds,
) -> Result<SplitMetrics, TrainError> {
    let normalized = metrics::metric_set(preds, targets)?;
    let preds_m: Vec<f64> = preds.iter().map(|&y| denormalize_label(y, bounds)).collect();
    let mae_meters = metrics::mae(&preds_m, labels_m)?;
    let mape_percent_meters = metrics::mape_percent(&preds_m, labels_m)?;
    Ok(SplitMetrics {
        mse: normalized.mse,
        msle: normalized.msle,
        mae: normalized.mae,
        mae_meters,
        mape_percent_meters,
    })
}

fn split_predictions(
    model: &MlpModel,
    dataset: &Dataset,
    indices: &[usize],
    cache: &mut ForwardCache,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut preds = Vec::with_capacity(indices.len());
    let mut targets = Vec::with_capacity(indices.len());
    let mut labels_m = Vec::with_capacity(indices.len());
    for &i in indices {
        let sample = &dataset.samples[i];
        preds.push(model.forward_cached(&sample.features, cache));
        targets.push(sample.label_normalized);
        labels_m.push(sample.label_l);
    }
    (preds, targets, labels_m)
}

/// Metrics of `model` over one split of `dataset`.
pub fn evaluate(model: &MlpModel, dataset: &Dataset, split: Split) -> Result<SplitMetrics, TrainError> {
    let width = dataset.feature_width();
    if model.config.input_width() != width {
        return Err(TrainError::DataModelMismatch { model: model.config.input_width(), data: width });
    }
    let indices = dataset.indices_of(split);
    if indices.is_empty() {
        return Err(TrainError::EmptySplit { split });
    }
    let mut cache = ForwardCache::new(&model.config);
    let (preds, targets, labels_m) = split_predictions(model, dataset, &indices, &mut cache);
    split_metrics_from_predictions(&preds, &targets, &labels_m, &dataset.manifest.target_bounds)
}

/// Channel length (m) for one raw transfer curve, using the checkpoint's
/// frozen normalization. The output is the unclamped inverse transform, so
/// predictions may fall outside the training bounds.
pub fn predict_length(model: &MlpModel, raw_currents: &[f64], ctx: &DataContext) -> Result<f64, TrainError> {
    let expected = model.config.input_width();
    if raw_currents.len() != expected || ctx.grid.len() != expected {
        return Err(TrainError::DataModelMismatch { model: expected, data: raw_currents.len() });
    }
    let features = normalize_features(raw_currents, &ctx.normalization);
    let y = model.forward(&features);
    Ok(denormalize_label(y, &ctx.target_bounds))
}

/// Trains a fresh model on the dataset's train split.
///
/// Per epoch: seeded shuffle of the train indices, mini-batches with the
/// final partial batch kept, one Adam step per batch, then metrics over
/// every non-empty split (test is logged but never influences training).
/// The init seed and each epoch's shuffle seed derive from `train_seed`.
pub fn train(
    dataset: &Dataset,
    settings: &TrainSettings,
    train_seed: u64,
) -> Result<(MlpModel, TrainReport), TrainError> {
    settings.validate()?;
    let width = dataset.feature_width();
    let init_seed = mix(&[train_seed, DOMAIN_INIT]);

    let mut layer_widths = Vec::with_capacity(settings.hidden_widths.len() + 2);
    layer_widths.push(width);
    layer_widths.extend_from_slice(&settings.hidden_widths);
    layer_widths.push(1);
    let config = MlpConfig {
        layer_widths,
        hidden_activation: settings.hidden_activation,
        init_seed,
    };
    let mut model = init_model(&config)?;

    let train_indices = dataset.indices_of(Split::Train);
    if train_indices.is_empty() {
        return Err(TrainError::EmptySplit { split: Split::Train });
    }
    let eval_splits: Vec<(Split, Vec<usize>)> = Split::ALL
        .iter()
        .map(|&s| (s, dataset.indices_of(s)))
        .filter(|(_, idx)| !idx.is_empty())
        .collect();

    let started = Instant::now();
    let mut rows = Vec::with_capacity(settings.epochs as usize * eval_splits.len());
    let mut cache = ForwardCache::new(&model.config);
    let mut grads = Gradients::zeros_like(&model);
    let mut adam = AdamState::new(&model);
    let mut order = train_indices.clone();
    let mut best: Option<(f64, MlpModel)> = None;

    for epoch in 1..=settings.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(&[train_seed, DOMAIN_SHUFFLE, epoch as u64]));
        order.shuffle(&mut rng);

        for (batch_no, batch) in order.chunks(settings.batch_size).enumerate() {
            grads.reset();
            let mut batch_loss = 0.0;
            for &i in batch {
                let sample = &dataset.samples[i];
                let pred = model.forward_cached(&sample.features, &mut cache);
                let err = pred - sample.label_normalized;
                batch_loss += err * err;
                backward(&model, &cache, sample.label_normalized, batch.len(), &mut grads);
            }
            batch_loss /= batch.len() as f64;
            if !batch_loss.is_finite() {
                return Err(TrainError::NumericalFailure { epoch, batch: batch_no });
            }
            adam_step(&mut model, &grads, &mut adam, settings.learning_rate);
        }

        let mut epoch_metrics = Vec::with_capacity(eval_splits.len());
        for (split, indices) in &eval_splits {
            let (preds, targets, labels_m) = split_predictions(&model, dataset, indices, &mut cache);
            let m = split_metrics_from_predictions(
                &preds,
                &targets,
                &labels_m,
                &dataset.manifest.target_bounds,
            )?;
            epoch_metrics.push((*split, m));
        }
        let seconds = started.elapsed().as_secs_f64();
        for (split, m) in &epoch_metrics {
            rows.push(ReportRow {
                epoch,
                split: *split,
                mse: m.mse,
                msle: m.msle,
                mae: m.mae,
                mae_meters: m.mae_meters,
                mape_percent_meters: m.mape_percent_meters,
                seconds,
            });
            if settings.select_best_val && *split == Split::Val {
                let improved = best.as_ref().map_or(true, |(mse, _)| m.mse < *mse);
                if improved {
                    best = Some((m.mse, model.clone()));
                }
            }
        }
    }

    let final_model = match best {
        Some((_, best_model)) if settings.select_best_val => best_model,
        _ => model,
    };
    Ok((final_model, TrainReport { train_seed, init_seed, rows }))
}

/// Writes the report as CSV under the fixed header. Identical runs produce
/// identical bytes except for the seconds column.
pub fn write_report(report: &TrainReport, path: &Path) -> Result<(), TrainError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{REPORT_HEADER}")?;
    for r in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.epoch, r.split, r.mse, r.msle, r.mae, r.mae_meters, r.mape_percent_meters, r.seconds
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Parses a report CSV back into rows; numeric columns round-trip bitwise.
pub fn read_report(path: &Path) -> Result<Vec<ReportRow>, TrainError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == REPORT_HEADER => {}
        Some((_, header)) => {
            return Err(TrainError::CorruptReport {
                line: 1,
                reason: format!("unexpected header '{header}'"),
            })
        }
        None => return Err(TrainError::CorruptReport { line: 1, reason: "empty report".into() }),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(TrainError::CorruptReport {
                line: line_no,
                reason: format!("expected 8 columns, found {}", fields.len()),
            });
        }
        let parse_f64 = |s: &str, what: &str| {
            s.parse::<f64>().map_err(|_| TrainError::CorruptReport {
                line: line_no,
                reason: format!("cannot parse {what} from '{s}'"),
            })
        };
        rows.push(ReportRow {
            epoch: fields[0].parse().map_err(|_| TrainError::CorruptReport {
                line: line_no,
                reason: format!("cannot parse epoch from '{}'", fields[0]),
            })?,
            split: fields[1].parse().map_err(|reason| TrainError::CorruptReport {
                line: line_no,
                reason,
            })?,
            mse: parse_f64(fields[2], "mse")?,
            msle: parse_f64(fields[3], "msle")?,
            mae: parse_f64(fields[4], "mae")?,
            mae_meters: parse_f64(fields[5], "mae_meters")?,
            mape_percent_meters: parse_f64(fields[6], "mape_percent_meters")?,
            seconds: parse_f64(fields[7], "seconds")?,
        });
    }
    Ok(rows)
}

/// Writes a checkpoint as pretty JSON; every float survives bit for bit.
pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<(), TrainError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let json = serde_json::to_string_pretty(checkpoint)
        .expect("checkpoint serialization cannot fail");
    fs::write(path, json + "\n")?;
    Ok(())
}

/// Loads and structurally validates a checkpoint.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, TrainError> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| TrainError::CorruptCheckpoint { reason: e.to_string() })?;
    let found = value
        .get("schema_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| TrainError::CorruptCheckpoint { reason: "missing schema_version".into() })?
        as u32;
    if found != CHECKPOINT_SCHEMA_VERSION {
        return Err(TrainError::SchemaMismatch { found, expected: CHECKPOINT_SCHEMA_VERSION });
    }
    let checkpoint: Checkpoint = serde_json::from_value(value)
        .map_err(|e| TrainError::CorruptCheckpoint { reason: e.to_string() })?;

    checkpoint
        .model
        .config
        .validate()
        .map_err(|e| TrainError::CorruptCheckpoint { reason: e.to_string() })?;
    let widths = &checkpoint.model.config.layer_widths;
    if checkpoint.model.layers.len() != widths.len() - 1 {
        return Err(TrainError::CorruptCheckpoint { reason: "layer count mismatch".into() });
    }
    for (k, layer) in checkpoint.model.layers.iter().enumerate() {
        if layer.fan_in != widths[k]
            || layer.fan_out != widths[k + 1]
            || layer.weights.len() != layer.fan_in * layer.fan_out
            || layer.biases.len() != layer.fan_out
        {
            return Err(TrainError::CorruptCheckpoint {
                reason: format!("layer {k} shape inconsistent with config"),
            });
        }
    }
    Ok(checkpoint)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{
        build_dataset, build_dataset_with, default_v_gs_list, ParamRanges, SplitGranularity,
    };
    use crate::level3::VdsGrid;

    fn small_dataset(seed: u64) -> Dataset {
        let grid = VdsGrid { start: 0.5, stop: 5.0, step: 0.5 };
        build_dataset(20, &ParamRanges::default(), &grid, &default_v_gs_list(), seed).unwrap()
    }

    fn quick_settings(epochs: u32) -> TrainSettings {
        TrainSettings {
            epochs,
            batch_size: 32,
            learning_rate: 1e-3,
            hidden_widths: vec![16, 8],
            hidden_activation: Activation::Relu,
            select_best_val: false,
        }
    }

    fn rows_equal_modulo_seconds(a: &[ReportRow], b: &[ReportRow]) -> bool {
        a.len() == b.len()
            && a.iter().zip(b).all(|(x, y)| {
                x.epoch == y.epoch
                    && x.split == y.split
                    && x.mse == y.mse
                    && x.msle == y.msle
                    && x.mae == y.mae
                    && x.mae_meters == y.mae_meters
                    && x.mape_percent_meters == y.mape_percent_meters
            })
    }

    #[test]
    fn settings_validation_rejects_degenerate_inputs() {
        let mut s = quick_settings(1);
        s.batch_size = 0;
        assert!(matches!(s.validate(), Err(TrainError::InvalidConfig { .. })));
        let mut s = quick_settings(1);
        s.learning_rate = 0.0;
        assert!(matches!(s.validate(), Err(TrainError::InvalidConfig { .. })));
        let mut s = quick_settings(1);
        s.hidden_widths = vec![8, 0];
        assert!(matches!(s.validate(), Err(TrainError::InvalidConfig { .. })));
    }

    #[test]
    fn zero_epochs_returns_untrained_model_and_empty_report() {
        let ds = small_dataset(1);
        let (model, report) = train(&ds, &quick_settings(0), 7).unwrap();
        assert!(report.rows.is_empty());

        let expected_config = MlpConfig {
            layer_widths: vec![10, 16, 8, 1],
            hidden_activation: Activation::Relu,
            init_seed: mix(&[7, DOMAIN_INIT]),
        };
        assert_eq!(model, init_model(&expected_config).unwrap());
    }

    #[test]
    fn report_has_one_row_per_split_per_epoch() {
        let ds = small_dataset(2);
        let (_, report) = train(&ds, &quick_settings(3), 7).unwrap();
        assert_eq!(report.rows.len(), 9);
        for split in Split::ALL {
            let epochs: Vec<u32> = report
                .rows
                .iter()
                .filter(|r| r.split == split)
                .map(|r| r.epoch)
                .collect();
            assert_eq!(epochs, vec![1, 2, 3]);
        }
        for r in &report.rows {
            for v in [r.mse, r.msle, r.mae, r.mae_meters, r.mape_percent_meters, r.seconds] {
                assert!(v.is_finite());
            }
        }
    }

    #[test]
    fn training_is_reproducible_modulo_seconds() {
        let ds = small_dataset(3);
        let (model_a, report_a) = train(&ds, &quick_settings(3), 11).unwrap();
        let (model_b, report_b) = train(&ds, &quick_settings(3), 11).unwrap();
        assert_eq!(model_a, model_b);
        assert!(rows_equal_modulo_seconds(&report_a.rows, &report_b.rows));

        let (model_c, _) = train(&ds, &quick_settings(3), 12).unwrap();
        assert_ne!(model_a, model_c);
    }

    #[test]
    fn training_mse_descends_on_a_small_run() {
        let ds = small_dataset(4);
        let (_, report) = train(&ds, &quick_settings(8), 5).unwrap();
        let train_rows: Vec<&ReportRow> =
            report.rows.iter().filter(|r| r.split == Split::Train).collect();
        let first = train_rows.first().unwrap().mse;
        let last = train_rows.last().unwrap().mse;
        assert!(last < first, "expected descent: {first} -> {last}");
    }

    #[test]
    fn evaluate_matches_final_report_row() {
        let ds = small_dataset(5);
        let (model, report) = train(&ds, &quick_settings(3), 13).unwrap();
        for split in Split::ALL {
            let m = evaluate(&model, &ds, split).unwrap();
            let last = report
                .rows
                .iter()
                .rev()
                .find(|r| r.split == split)
                .unwrap();
            assert_eq!(m.mse, last.mse);
            assert_eq!(m.msle, last.msle);
            assert_eq!(m.mae, last.mae);
            assert_eq!(m.mae_meters, last.mae_meters);
            assert_eq!(m.mape_percent_meters, last.mape_percent_meters);
        }
    }

    #[test]
    fn perfect_predictions_zero_every_metric() {
        let ds = small_dataset(6);
        let targets: Vec<f64> = ds.samples.iter().map(|s| s.label_normalized).collect();
        let labels_m: Vec<f64> = ds.samples.iter().map(|s| s.label_l).collect();
        let m = split_metrics_from_predictions(
            &targets,
            &targets,
            &labels_m,
            &ds.manifest.target_bounds,
        )
        .unwrap();
        assert_eq!(m.mse, 0.0);
        assert_eq!(m.msle, 0.0);
        assert_eq!(m.mae, 0.0);
        // denormalize(normalize(L)) reproduces L to a few ulps, not exactly
        assert!(m.mae_meters <= 1e-9 * 5e-6);
        assert!(m.mape_percent_meters <= 1e-9);
    }

    #[test]
    fn test_split_never_influences_training() {
        let ds = small_dataset(7);
        let (model_full, report_full) = train(&ds, &quick_settings(3), 17).unwrap();

        // drop every test-split sample; train/val samples keep relative order
        let mut stripped = ds.clone();
        let keep: Vec<bool> =
            (0..ds.samples.len()).map(|i| ds.split_of(i) != Split::Test).collect();
        let mut it = keep.iter();
        stripped.samples.retain(|_| *it.next().unwrap());

        let (model_stripped, report_stripped) = train(&stripped, &quick_settings(3), 17).unwrap();
        assert_eq!(model_full, model_stripped);

        let non_test = |rows: &[ReportRow]| -> Vec<ReportRow> {
            rows.iter().copied().filter(|r| r.split != Split::Test).collect()
        };
        assert!(rows_equal_modulo_seconds(
            &non_test(&report_full.rows),
            &non_test(&report_stripped.rows),
        ));
    }

    #[test]
    fn empty_split_is_reported() {
        let grid = VdsGrid { start: 0.5, stop: 5.0, step: 0.5 };
        let ds = build_dataset_with(
            10,
            &ParamRanges::default(),
            &grid,
            &default_v_gs_list(),
            8,
            [1.0, 0.0, 0.0],
            SplitGranularity::Device,
        )
        .unwrap();
        let (model, _) = train(&ds, &quick_settings(1), 19).unwrap();
        assert!(matches!(
            evaluate(&model, &ds, Split::Val),
            Err(TrainError::EmptySplit { split: Split::Val })
        ));
    }

    #[test]
    fn best_val_selection_returns_the_lowest_val_epoch() {
        let ds = small_dataset(9);
        let mut settings = quick_settings(6);
        settings.select_best_val = true;
        let (model, report) = train(&ds, &settings, 23).unwrap();
        let best_val = report
            .rows
            .iter()
            .filter(|r| r.split == Split::Val)
            .map(|r| r.mse)
            .fold(f64::INFINITY, f64::min);
        let m = evaluate(&model, &ds, Split::Val).unwrap();
        assert_eq!(m.mse, best_val);
    }

    #[test]
    fn predict_inverts_the_target_transform_at_the_endpoints() {
        let ds = small_dataset(10);
        let (model, _) = train(&ds, &quick_settings(0), 29).unwrap();
        let ctx = DataContext {
            normalization: ds.manifest.normalization.clone(),
            target_bounds: ds.manifest.target_bounds,
            grid: ds.manifest.grid,
        };

        // zero weights and biases force y' = 0
        let mut zero = model.clone();
        for layer in &mut zero.layers {
            layer.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        let raw = &ds.samples[0].raw_currents;
        let l = predict_length(&zero, raw, &ctx).unwrap();
        assert!((l - 1e-7).abs() / 1e-7 <= 1e-12, "y'=0 gave {l}");

        // unit output bias on the zero model forces y' = 1
        let mut one = zero.clone();
        *one.layers.last_mut().unwrap().biases.last_mut().unwrap() = 1.0;
        let l = predict_length(&one, raw, &ctx).unwrap();
        assert!((l - 5e-6).abs() / 5e-6 <= 1e-12, "y'=1 gave {l}");
    }

    #[test]
    fn predict_rejects_wrong_curve_length() {
        let ds = small_dataset(11);
        let (model, _) = train(&ds, &quick_settings(0), 31).unwrap();
        let ctx = DataContext {
            normalization: ds.manifest.normalization.clone(),
            target_bounds: ds.manifest.target_bounds,
            grid: ds.manifest.grid,
        };
        let short = vec![1.0; 9];
        assert!(matches!(
            predict_length(&model, &short, &ctx),
            Err(TrainError::DataModelMismatch { model: 10, data: 9 })
        ));
    }

    #[test]
    fn evaluate_rejects_mismatched_model() {
        let ds = small_dataset(12);
        let config = MlpConfig {
            layer_widths: vec![7, 4, 1],
            hidden_activation: Activation::Relu,
            init_seed: 1,
        };
        let model = init_model(&config).unwrap();
        assert!(matches!(
            evaluate(&model, &ds, Split::Train),
            Err(TrainError::DataModelMismatch { model: 7, data: 10 })
        ));
    }

    #[test]
    fn report_round_trips_bitwise() {
        let ds = small_dataset(13);
        let (_, report) = train(&ds, &quick_settings(2), 37).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        write_report(&report, &path).unwrap();
        let rows = read_report(&path).unwrap();
        assert_eq!(report.rows, rows);
    }

    #[test]
    fn report_reader_rejects_corrupt_rows() {
        let ds = small_dataset(14);
        let (_, report) = train(&ds, &quick_settings(1), 41).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        write_report(&report, &path).unwrap();
        let mut lines: Vec<String> =
            fs::read_to_string(&path).unwrap().lines().map(String::from).collect();
        lines[2] = "1,train,oops".into();
        fs::write(&path, lines.join("\n") + "\n").unwrap();
        assert!(matches!(
            read_report(&path),
            Err(TrainError::CorruptReport { line: 3, .. })
        ));
    }

    #[test]
    fn checkpoint_round_trips_bitwise() {
        let ds = small_dataset(15);
        let (model, report) = train(&ds, &quick_settings(1), 43).unwrap();
        let checkpoint = Checkpoint {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            model,
            data_context: DataContext {
                normalization: ds.manifest.normalization.clone(),
                target_bounds: ds.manifest.target_bounds,
                grid: ds.manifest.grid,
            },
            train_seed: report.train_seed,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_checkpoint(&checkpoint, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(checkpoint, back);

        // reloaded model predicts identically
        let raw = &ds.samples[3].raw_currents;
        let a = predict_length(&checkpoint.model, raw, &checkpoint.data_context).unwrap();
        let b = predict_length(&back.model, raw, &back.data_context).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn checkpoint_schema_and_shape_are_validated() {
        let ds = small_dataset(16);
        let (model, _) = train(&ds, &quick_settings(1), 47).unwrap();
        let checkpoint = Checkpoint {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            model,
            data_context: DataContext {
                normalization: ds.manifest.normalization.clone(),
                target_bounds: ds.manifest.target_bounds,
                grid: ds.manifest.grid,
            },
            train_seed: 47,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_checkpoint(&checkpoint, &path).unwrap();

        let text = fs::read_to_string(&path)
            .unwrap()
            .replace("\"schema_version\": 1", "\"schema_version\": 9");
        fs::write(&path, &text).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(TrainError::SchemaMismatch { found: 9, expected: 1 })
        ));

        fs::write(&path, "{ not json").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(TrainError::CorruptCheckpoint { .. })));

        let mut bad = checkpoint.clone();
        bad.model.layers[0].weights.pop();
        save_checkpoint(&bad, &path).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(TrainError::CorruptCheckpoint { .. })));
    }
}

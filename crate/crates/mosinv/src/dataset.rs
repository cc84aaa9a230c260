//! Dataset synthesis: seeded device sampling, curve generation, feature
//! normalization, split assignment, and the on-disk format.
//!
//! A dataset is a directory holding `manifest.json` (generation inputs,
//! normalization statistics, split assignment) and `data.csv` (one row per
//! (device, v_gs) curve: raw currents plus the device parameters). Floats
//! are serialized with the shortest round-trip decimal representation, so
//! read-after-write reproduces every value bit for bit; normalized features
//! are recomputed from the manifest statistics on load and are bitwise
//! reproducible as well.
//!
//! Sampling is keyed by `(master_seed, device_index, retry)`, which makes
//! generation order-independent: any device can be regenerated in isolation.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::level3::{curve_set, DeviceParams, VdsGrid};
use crate::seed::{mix, DOMAIN_SAMPLE, DOMAIN_SPLIT};

/// On-disk schema version for `manifest.json` + `data.csv`.
pub const SCHEMA_VERSION: u32 = 1;

/// Additive floor (A) applied before taking log10 of a current.
pub const CURRENT_FLOOR: f64 = 1e-12;

/// Floor for per-feature standard deviations.
const STD_FLOOR: f64 = 1e-12;

/// Fixed ambient temperature (degrees C) stamped on every sampled device.
const TEMP_C: f64 = 25.0;

/// Train/val/test fractions used when none are given.
pub const DEFAULT_SPLIT_FRACTIONS: [f64; 3] = [0.8, 0.1, 0.1];

/// Retries after which a device counts as failed for the 1% abort guard.
const RETRIES_BEFORE_FAILURE: u32 = 3;

/// Absolute cap on per-device resampling attempts.
const RETRY_HARD_CAP: u32 = 100;

/// Default gate-voltage list: 1 V to 12 V in 1 V steps.
pub fn default_v_gs_list() -> Vec<f64> {
    (1..=12).map(f64::from).collect()
}

/// Dataset partition tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split '{other}'")),
        }
    }
}

/// Unit of split assignment: whole devices (default, no curve of a device
/// crosses splits) or individual curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitGranularity {
    Device,
    Curve,
}

/// How a parameter is drawn over its range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingLaw {
    Uniform,
    LogUniform,
}

/// Closed sampling interval plus its law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub min: f64,
    pub max: f64,
    pub law: SamplingLaw,
}

impl ParamRange {
    fn uniform(min: f64, max: f64) -> Self {
        ParamRange { min, max, law: SamplingLaw::Uniform }
    }

    fn log_uniform(min: f64, max: f64) -> Self {
        ParamRange { min, max, law: SamplingLaw::LogUniform }
    }

    fn draw(&self, rng: &mut impl Rng) -> f64 {
        let u: f64 = rng.gen();
        match self.law {
            SamplingLaw::Uniform => self.min + (self.max - self.min) * u,
            SamplingLaw::LogUniform => {
                let (lo, hi) = (self.min.ln(), self.max.ln());
                (lo + (hi - lo) * u).exp()
            }
        }
    }
}

/// Sampling ranges for the nine varied device parameters. Temperature is
/// fixed at 25 degrees C and not sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRanges {
    pub l: ParamRange,
    pub w: ParamRange,
    pub r_d: ParamRange,
    pub r_s: ParamRange,
    pub v_t: ParamRange,
    pub kp: ParamRange,
    pub gamma: ParamRange,
    pub phi: ParamRange,
    pub theta: ParamRange,
}

impl Default for ParamRanges {
    fn default() -> Self {
        ParamRanges {
            l: ParamRange::log_uniform(1e-7, 5e-6),
            w: ParamRange::log_uniform(1e-2, 10.0),
            r_d: ParamRange::log_uniform(1e-4, 1e-2),
            r_s: ParamRange::log_uniform(1e-4, 1e-2),
            v_t: ParamRange::uniform(2.0, 8.0),
            kp: ParamRange::log_uniform(2e-7, 20.0),
            gamma: ParamRange::uniform(0.0, 10.0),
            phi: ParamRange::uniform(0.0, 6.0),
            theta: ParamRange::uniform(0.0, 10.0),
        }
    }
}

impl ParamRanges {
    fn fields(&self) -> [(&'static str, &ParamRange); 9] {
        [
            ("l", &self.l),
            ("w", &self.w),
            ("r_d", &self.r_d),
            ("r_s", &self.r_s),
            ("v_t", &self.v_t),
            ("kp", &self.kp),
            ("gamma", &self.gamma),
            ("phi", &self.phi),
            ("theta", &self.theta),
        ]
    }

    /// Rejects empty or inverted intervals, ranges outside the supported
    /// bounds, and log-uniform ranges touching zero.
    pub fn validate(&self) -> Result<(), DatasetError> {
        let bounds = ParamRanges::default();
        for ((name, range), (_, hard)) in self.fields().into_iter().zip(bounds.fields()) {
            if !(range.min.is_finite() && range.max.is_finite()) {
                return Err(DatasetError::InvalidRange {
                    name,
                    reason: "bounds must be finite".into(),
                });
            }
            if range.min >= range.max {
                return Err(DatasetError::InvalidRange {
                    name,
                    reason: format!("min {} must be below max {}", range.min, range.max),
                });
            }
            if range.min < hard.min || range.max > hard.max {
                return Err(DatasetError::InvalidRange {
                    name,
                    reason: format!(
                        "[{}, {}] outside supported bounds [{}, {}]",
                        range.min, range.max, hard.min, hard.max
                    ),
                });
            }
            if range.law == SamplingLaw::LogUniform && range.min <= 0.0 {
                return Err(DatasetError::InvalidRange {
                    name,
                    reason: "log-uniform sampling needs a positive lower bound".into(),
                });
            }
        }
        Ok(())
    }
}

/// Label normalization bounds: the configured channel-length range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetBounds {
    /// Smallest sampled channel length (m).
    pub l_min: f64,
    /// Largest sampled channel length (m).
    pub l_max: f64,
}

/// Per-feature statistics of `log10(I + CURRENT_FLOOR)`, computed on the
/// training split only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Additive floor (A) applied before the log transform.
    pub current_floor: f64,
}

/// Everything needed to regenerate, renormalize, or extend a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub master_seed: u64,
    pub n_devices: u32,
    pub v_gs_list: Vec<f64>,
    pub grid: VdsGrid,
    pub parameter_ranges: ParamRanges,
    pub target_bounds: TargetBounds,
    pub normalization: Normalization,
    pub split_fractions: [f64; 3],
    pub split_granularity: SplitGranularity,
    /// Split per device (device granularity) or per sample row (curve
    /// granularity).
    pub split_assignment: Vec<Split>,
    /// Total number of device resamples forced by solver failures.
    pub resample_retries: u32,
}

/// One labeled training sample: a single transfer curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSample {
    pub device_id: u32,
    /// Gate voltage of this curve (V).
    pub v_gs: f64,
    /// Terminal drain currents over the v_ds grid (A).
    pub raw_currents: Vec<f64>,
    /// Standardized log-currents; empty until normalization is applied.
    pub features: Vec<f64>,
    /// Full parameter set of the originating device.
    pub params: DeviceParams,
    /// Channel length label (m). Equals `params.l`.
    pub label_l: f64,
    /// Label mapped to [0, 1] in log space over the target bounds.
    pub label_normalized: f64,
}

/// In-memory dataset: manifest plus samples in generation order
/// (device-major, then v_gs list order).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub samples: Vec<CurveSample>,
}

impl Dataset {
    /// Split of the sample at `index`, honoring the manifest granularity.
    pub fn split_of(&self, index: usize) -> Split {
        match self.manifest.split_granularity {
            SplitGranularity::Device => {
                self.manifest.split_assignment[self.samples[index].device_id as usize]
            }
            SplitGranularity::Curve => self.manifest.split_assignment[index],
        }
    }

    /// Sample indices belonging to `split`, in stored order.
    pub fn indices_of(&self, split: Split) -> Vec<usize> {
        (0..self.samples.len()).filter(|&i| self.split_of(i) == split).collect()
    }

    /// Width of the feature vector (= v_ds grid length).
    pub fn feature_width(&self) -> usize {
        self.manifest.grid.len()
    }
}

/// Dataset construction and I/O failures.
#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("invalid {name}: {reason}")]
    InvalidRange { name: &'static str, reason: String },
    #[error("curve generation failed for {failed} of {total} devices after retries")]
    GenerationFailure { failed: usize, total: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("unsupported dataset schema version {found} (expected {expected})")]
    SchemaMismatch { found: u32, expected: u32 },
    #[error("corrupt dataset at line {line}: {reason}")]
    CorruptData { line: usize, reason: String },
}

/// Draws the parameter set for one device. Pure in
/// `(ranges, master_seed, device_index, retry)`; the draw order (l, w, r_d,
/// r_s, v_t, kp, gamma, phi, theta) is part of the reproducibility contract.
pub fn sample_params(
    ranges: &ParamRanges,
    master_seed: u64,
    device_index: u32,
    retry: u32,
) -> DeviceParams {
    let seed = mix(&[master_seed, DOMAIN_SAMPLE, device_index as u64, retry as u64]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DeviceParams {
        l: ranges.l.draw(&mut rng),
        w: ranges.w.draw(&mut rng),
        r_d: ranges.r_d.draw(&mut rng),
        r_s: ranges.r_s.draw(&mut rng),
        v_t: ranges.v_t.draw(&mut rng),
        kp: ranges.kp.draw(&mut rng),
        gamma: ranges.gamma.draw(&mut rng),
        phi: ranges.phi.draw(&mut rng),
        theta: ranges.theta.draw(&mut rng),
        temp_c: TEMP_C,
    }
}

/// Assigns `n_units` units (devices or samples) to splits via a seeded
/// shuffle. Counts match the fractions to within rounding.
pub fn assign_splits(n_units: usize, fractions: [f64; 3], master_seed: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n_units).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[master_seed, DOMAIN_SPLIT]));
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng);

    let n_train = ((n_units as f64 * fractions[0]).round() as usize).min(n_units);
    let n_val = ((n_units as f64 * fractions[1]).round() as usize).min(n_units - n_train);

    let mut assignment = vec![Split::Test; n_units];
    for (rank, &unit) in order.iter().enumerate() {
        assignment[unit] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    assignment
}

/// Maps a channel length (m) to its normalized label in [0, 1].
pub fn normalize_label(l: f64, bounds: &TargetBounds) -> f64 {
    let lo = bounds.l_min.log10();
    let hi = bounds.l_max.log10();
    (l.log10() - lo) / (hi - lo)
}

/// Inverse of [`normalize_label`]: normalized label to meters.
pub fn denormalize_label(y: f64, bounds: &TargetBounds) -> f64 {
    let lo = bounds.l_min.log10();
    let hi = bounds.l_max.log10();
    10f64.powf(y * (hi - lo) + lo)
}

/// Standardizes one raw curve with frozen statistics:
/// `x_i = (log10(I_i + floor) - mean_i) / std_i`.
pub fn normalize_features(raw_currents: &[f64], norm: &Normalization) -> Vec<f64> {
    raw_currents
        .iter()
        .enumerate()
        .map(|(i, &amps)| ((amps + norm.current_floor).log10() - norm.means[i]) / norm.stds[i])
        .collect()
}

/// Per-feature mean/std of the log-floored currents over the given sample
/// indices. Population std, floored at `STD_FLOOR`.
fn compute_normalization(samples: &[CurveSample], train: &[usize], width: usize) -> Normalization {
    let n = train.len() as f64;
    let mut means = vec![0.0; width];
    for &idx in train {
        for (i, &amps) in samples[idx].raw_currents.iter().enumerate() {
            means[i] += (amps + CURRENT_FLOOR).log10();
        }
    }
    for m in &mut means {
        *m /= n;
    }
    let mut stds = vec![0.0; width];
    for &idx in train {
        for (i, &amps) in samples[idx].raw_currents.iter().enumerate() {
            let d = (amps + CURRENT_FLOOR).log10() - means[i];
            stds[i] += d * d;
        }
    }
    for s in &mut stds {
        *s = (*s / n).sqrt().max(STD_FLOOR);
    }
    Normalization { means, stds, current_floor: CURRENT_FLOOR }
}

/// Builds a dataset with the default 80/10/10 device-level split.
pub fn build_dataset(
    n_devices: u32,
    ranges: &ParamRanges,
    grid: &VdsGrid,
    v_gs_list: &[f64],
    master_seed: u64,
) -> Result<Dataset, DatasetError> {
    build_dataset_with(
        n_devices,
        ranges,
        grid,
        v_gs_list,
        master_seed,
        DEFAULT_SPLIT_FRACTIONS,
        SplitGranularity::Device,
    )
}

/// Builds a dataset with explicit split fractions and granularity.
///
/// Devices whose curves fail the terminal solve are resampled with derived
/// retry seeds; generation aborts with [`DatasetError::GenerationFailure`]
/// once more than 1% of devices needed over three retries.
pub fn build_dataset_with(
    n_devices: u32,
    ranges: &ParamRanges,
    grid: &VdsGrid,
    v_gs_list: &[f64],
    master_seed: u64,
    split_fractions: [f64; 3],
    split_granularity: SplitGranularity,
) -> Result<Dataset, DatasetError> {
    ranges.validate()?;
    grid.validate().map_err(|reason| DatasetError::InvalidRange { name: "vds_grid", reason })?;
    if n_devices < 10 {
        return Err(DatasetError::InvalidRange {
            name: "n_devices",
            reason: format!("need at least 10 devices, got {n_devices}"),
        });
    }
    if v_gs_list.is_empty() {
        return Err(DatasetError::InvalidRange {
            name: "v_gs_list",
            reason: "at least one gate voltage required".into(),
        });
    }
    let frac_sum: f64 = split_fractions.iter().sum();
    if split_fractions.iter().any(|&f| !(0.0..=1.0).contains(&f)) || (frac_sum - 1.0).abs() > 1e-9
    {
        return Err(DatasetError::InvalidRange {
            name: "split_fractions",
            reason: format!("fractions {split_fractions:?} must be in [0,1] and sum to 1"),
        });
    }

    let bounds = TargetBounds { l_min: ranges.l.min, l_max: ranges.l.max };
    let width = grid.len();
    let mut samples = Vec::with_capacity(n_devices as usize * v_gs_list.len());
    let mut total_retries = 0u32;
    let mut exhausted_devices = 0usize;

    for device_id in 0..n_devices {
        let mut retry = 0u32;
        loop {
            let params = sample_params(ranges, master_seed, device_id, retry);
            match curve_set(&params, v_gs_list, grid) {
                Ok(curves) => {
                    for (&v_gs, raw_currents) in v_gs_list.iter().zip(curves) {
                        samples.push(CurveSample {
                            device_id,
                            v_gs,
                            raw_currents,
                            features: Vec::new(),
                            params,
                            label_l: params.l,
                            label_normalized: normalize_label(params.l, &bounds),
                        });
                    }
                    break;
                }
                Err(_) => {
                    total_retries += 1;
                    retry += 1;
                    if retry == RETRIES_BEFORE_FAILURE + 1 {
                        exhausted_devices += 1;
                        if exhausted_devices as f64 > 0.01 * n_devices as f64 {
                            return Err(DatasetError::GenerationFailure {
                                failed: exhausted_devices,
                                total: n_devices as usize,
                            });
                        }
                    }
                    if retry > RETRY_HARD_CAP {
                        return Err(DatasetError::GenerationFailure {
                            failed: exhausted_devices.max(1),
                            total: n_devices as usize,
                        });
                    }
                }
            }
        }
    }

    let n_units = match split_granularity {
        SplitGranularity::Device => n_devices as usize,
        SplitGranularity::Curve => samples.len(),
    };
    let split_assignment = assign_splits(n_units, split_fractions, master_seed);

    let train_indices: Vec<usize> = (0..samples.len())
        .filter(|&i| {
            let unit = match split_granularity {
                SplitGranularity::Device => samples[i].device_id as usize,
                SplitGranularity::Curve => i,
            };
            split_assignment[unit] == Split::Train
        })
        .collect();
    if train_indices.is_empty() {
        return Err(DatasetError::InvalidRange {
            name: "split_fractions",
            reason: "training split is empty; normalization needs training samples".into(),
        });
    }

    let normalization = compute_normalization(&samples, &train_indices, width);
    for sample in &mut samples {
        sample.features = normalize_features(&sample.raw_currents, &normalization);
    }

    let manifest = DatasetManifest {
        schema_version: SCHEMA_VERSION,
        master_seed,
        n_devices,
        v_gs_list: v_gs_list.to_vec(),
        grid: *grid,
        parameter_ranges: ranges.clone(),
        target_bounds: bounds,
        normalization,
        split_fractions,
        split_granularity,
        split_assignment,
        resample_retries: total_retries,
    };
    Ok(Dataset { manifest, samples })
}

fn csv_header(width: usize) -> String {
    let mut header = String::from("device_id,v_gs");
    for i in 0..width {
        header.push_str(&format!(",i_{i:03}"));
    }
    header.push_str(",L,W,R_d,R_s,V_t,KP,gamma,phi,theta");
    header
}

/// Writes `manifest.json` and `data.csv` under `dir`, creating it if needed.
/// Rewriting the same dataset is byte-identical.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<(), DatasetError> {
    fs::create_dir_all(dir)?;

    let manifest_json = serde_json::to_string_pretty(&dataset.manifest)
        .expect("manifest serialization cannot fail");
    fs::write(dir.join("manifest.json"), manifest_json + "\n")?;

    let file = fs::File::create(dir.join("data.csv"))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{}", csv_header(dataset.manifest.grid.len()))?;
    for sample in &dataset.samples {
        let mut row = format!("{},{}", sample.device_id, sample.v_gs);
        for &amps in &sample.raw_currents {
            row.push(',');
            row.push_str(&amps.to_string());
        }
        let p = &sample.params;
        row.push_str(&format!(
            ",{},{},{},{},{},{},{},{},{}",
            p.l, p.w, p.r_d, p.r_s, p.v_t, p.kp, p.gamma, p.phi, p.theta
        ));
        writeln!(out, "{row}")?;
    }
    out.flush()?;
    Ok(())
}

fn parse_field<T: FromStr>(field: &str, line: usize, what: &str) -> Result<T, DatasetError> {
    field.parse().map_err(|_| DatasetError::CorruptData {
        line,
        reason: format!("cannot parse {what} from '{field}'"),
    })
}

/// Loads a dataset directory. Features and normalized labels are recomputed
/// from the manifest statistics; numeric content round-trips bitwise.
pub fn read_dataset(dir: &Path) -> Result<Dataset, DatasetError> {
    let manifest_text = fs::read_to_string(dir.join("manifest.json"))?;
    let manifest: DatasetManifest = serde_json::from_str(&manifest_text)
        .map_err(|e| DatasetError::CorruptData { line: 0, reason: format!("manifest: {e}") })?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(DatasetError::SchemaMismatch {
            found: manifest.schema_version,
            expected: SCHEMA_VERSION,
        });
    }
    let width = manifest.grid.len();
    if manifest.normalization.means.len() != width || manifest.normalization.stds.len() != width {
        return Err(DatasetError::CorruptData {
            line: 0,
            reason: "normalization statistics do not match the grid length".into(),
        });
    }

    let text = fs::read_to_string(dir.join("data.csv"))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == csv_header(width) => {}
        Some((_, header)) => {
            return Err(DatasetError::CorruptData {
                line: 1,
                reason: format!("unexpected header '{header}'"),
            })
        }
        None => {
            return Err(DatasetError::CorruptData { line: 1, reason: "empty data file".into() })
        }
    }

    let expected_cols = 2 + width + 9;
    let mut samples = Vec::new();
    for (line_idx, line) in lines {
        let line_no = line_idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected_cols {
            return Err(DatasetError::CorruptData {
                line: line_no,
                reason: format!("expected {expected_cols} columns, found {}", fields.len()),
            });
        }
        let device_id: u32 = parse_field(fields[0], line_no, "device_id")?;
        let v_gs: f64 = parse_field(fields[1], line_no, "v_gs")?;
        let mut raw_currents = Vec::with_capacity(width);
        for field in &fields[2..2 + width] {
            raw_currents.push(parse_field::<f64>(field, line_no, "current")?);
        }
        let tail = &fields[2 + width..];
        let params = DeviceParams {
            l: parse_field(tail[0], line_no, "L")?,
            w: parse_field(tail[1], line_no, "W")?,
            r_d: parse_field(tail[2], line_no, "R_d")?,
            r_s: parse_field(tail[3], line_no, "R_s")?,
            v_t: parse_field(tail[4], line_no, "V_t")?,
            kp: parse_field(tail[5], line_no, "KP")?,
            gamma: parse_field(tail[6], line_no, "gamma")?,
            phi: parse_field(tail[7], line_no, "phi")?,
            theta: parse_field(tail[8], line_no, "theta")?,
            temp_c: TEMP_C,
        };
        if device_id >= manifest.n_devices {
            return Err(DatasetError::CorruptData {
                line: line_no,
                reason: format!("device_id {device_id} outside manifest range"),
            });
        }
        let features = normalize_features(&raw_currents, &manifest.normalization);
        let label_normalized = normalize_label(params.l, &manifest.target_bounds);
        samples.push(CurveSample {
            device_id,
            v_gs,
            raw_currents,
            features,
            params,
            label_l: params.l,
            label_normalized,
        });
    }

    let expected_samples = manifest.n_devices as usize * manifest.v_gs_list.len();
    if samples.len() != expected_samples {
        return Err(DatasetError::CorruptData {
            line: 0,
            reason: format!("expected {expected_samples} rows, found {}", samples.len()),
        });
    }
    let expected_units = match manifest.split_granularity {
        SplitGranularity::Device => manifest.n_devices as usize,
        SplitGranularity::Curve => samples.len(),
    };
    if manifest.split_assignment.len() != expected_units {
        return Err(DatasetError::CorruptData {
            line: 0,
            reason: format!(
                "split assignment covers {} units, expected {expected_units}",
                manifest.split_assignment.len()
            ),
        });
    }

    Ok(Dataset { manifest, samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_grid() -> VdsGrid {
        VdsGrid { start: 0.5, stop: 5.0, step: 0.5 }
    }

    fn build_small(seed: u64) -> Dataset {
        build_dataset(10, &ParamRanges::default(), &small_grid(), &default_v_gs_list(), seed)
            .unwrap()
    }

    #[test]
    fn default_ranges_validate() {
        ParamRanges::default().validate().unwrap();
    }

    #[test]
    fn validation_rejects_bad_ranges() {
        let mut r = ParamRanges::default();
        r.v_t = ParamRange::uniform(5.0, 5.0); // empty interval
        assert!(matches!(r.validate(), Err(DatasetError::InvalidRange { name: "v_t", .. })));

        let mut r = ParamRanges::default();
        r.l = ParamRange::log_uniform(1e-8, 5e-6); // below supported bounds
        assert!(matches!(r.validate(), Err(DatasetError::InvalidRange { name: "l", .. })));
    }

    #[test]
    fn sampler_respects_ranges_and_fixes_temperature() {
        let ranges = ParamRanges::default();
        for idx in 0..1000 {
            let p = sample_params(&ranges, 42, idx, 0);
            assert!(p.l >= 1e-7 && p.l <= 5e-6);
            assert!(p.w >= 1e-2 && p.w <= 10.0);
            assert!(p.r_d >= 1e-4 && p.r_d <= 1e-2);
            assert!(p.r_s >= 1e-4 && p.r_s <= 1e-2);
            assert!(p.v_t >= 2.0 && p.v_t <= 8.0);
            assert!(p.kp >= 2e-7 && p.kp <= 20.0);
            assert!(p.gamma >= 0.0 && p.gamma <= 10.0);
            assert!(p.phi >= 0.0 && p.phi <= 6.0);
            assert!(p.theta >= 0.0 && p.theta <= 10.0);
            assert_eq!(p.temp_c, 25.0);
        }
    }

    #[test]
    fn sampler_is_pure_in_seed_index_retry() {
        let ranges = ParamRanges::default();
        assert_eq!(sample_params(&ranges, 7, 3, 0), sample_params(&ranges, 7, 3, 0));
        assert_ne!(sample_params(&ranges, 7, 3, 0), sample_params(&ranges, 7, 4, 0));
        assert_ne!(sample_params(&ranges, 7, 3, 0), sample_params(&ranges, 7, 3, 1));
        assert_ne!(sample_params(&ranges, 7, 3, 0), sample_params(&ranges, 8, 3, 0));
    }

    #[test]
    fn log_uniform_median_sits_at_log_midpoint() {
        let ranges = ParamRanges::default();
        let mut logs: Vec<f64> =
            (0..10_000).map(|i| sample_params(&ranges, 11, i, 0).l.log10()).collect();
        logs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = (logs[4999] + logs[5000]) / 2.0;
        let midpoint = (1e-7f64.log10() + 5e-6f64.log10()) / 2.0;
        assert!(
            (median - midpoint).abs() <= 0.05 * midpoint.abs(),
            "median {median} vs midpoint {midpoint}"
        );
    }

    #[test]
    fn split_counts_match_fractions() {
        let assignment = assign_splits(5000, DEFAULT_SPLIT_FRACTIONS, 1);
        let count = |s: Split| assignment.iter().filter(|&&a| a == s).count();
        assert_eq!(count(Split::Train), 4000);
        assert_eq!(count(Split::Val), 500);
        assert_eq!(count(Split::Test), 500);

        let tiny = assign_splits(10, DEFAULT_SPLIT_FRACTIONS, 1);
        let count = |s: Split| tiny.iter().filter(|&&a| a == s).count();
        assert_eq!(count(Split::Train), 8);
        assert_eq!(count(Split::Val), 1);
        assert_eq!(count(Split::Test), 1);
    }

    #[test]
    fn degenerate_fractions_put_everything_in_train() {
        let assignment = assign_splits(100, [1.0, 0.0, 0.0], 9);
        assert!(assignment.iter().all(|&s| s == Split::Train));
    }

    #[test]
    fn split_assignment_is_seeded() {
        assert_eq!(assign_splits(100, DEFAULT_SPLIT_FRACTIONS, 5), assign_splits(100, DEFAULT_SPLIT_FRACTIONS, 5));
        assert_ne!(assign_splits(100, DEFAULT_SPLIT_FRACTIONS, 5), assign_splits(100, DEFAULT_SPLIT_FRACTIONS, 6));
    }

    #[test]
    fn build_produces_exact_sample_count() {
        let ds = build_small(3);
        assert_eq!(ds.samples.len(), 120);
        assert_eq!(ds.manifest.resample_retries, 0);
        for s in &ds.samples {
            assert_eq!(s.raw_currents.len(), 10);
            assert_eq!(s.features.len(), 10);
            assert!(s.label_normalized >= 0.0 && s.label_normalized <= 1.0);
            assert_eq!(s.label_l, s.params.l);
        }
    }

    #[test]
    fn device_split_keeps_devices_atomic() {
        let ds = build_small(3);
        for (i, s) in ds.samples.iter().enumerate() {
            assert_eq!(ds.split_of(i), ds.manifest.split_assignment[s.device_id as usize]);
        }
    }

    #[test]
    fn curve_granularity_splits_by_sample() {
        let ds = build_dataset_with(
            10,
            &ParamRanges::default(),
            &small_grid(),
            &default_v_gs_list(),
            3,
            DEFAULT_SPLIT_FRACTIONS,
            SplitGranularity::Curve,
        )
        .unwrap();
        assert_eq!(ds.manifest.split_assignment.len(), 120);
        let train = ds.indices_of(Split::Train).len();
        assert_eq!(train, 96); // 0.8 * 120
    }

    #[test]
    fn device_sampling_is_order_independent() {
        // device 7 of a 10-device build is exactly the standalone sample
        let ds = build_small(21);
        let standalone = sample_params(&ParamRanges::default(), 21, 7, 0);
        let from_build = ds.samples.iter().find(|s| s.device_id == 7).unwrap();
        assert_eq!(from_build.params, standalone);
    }

    #[test]
    fn builds_are_deterministic() {
        assert_eq!(build_small(17), build_small(17));
    }

    #[test]
    fn train_features_are_standardized() {
        let ds = build_small(5);
        let train = ds.indices_of(Split::Train);
        let width = ds.feature_width();
        for i in 0..width {
            let mean: f64 =
                train.iter().map(|&k| ds.samples[k].features[i]).sum::<f64>() / train.len() as f64;
            let var: f64 = train
                .iter()
                .map(|&k| (ds.samples[k].features[i] - mean).powi(2))
                .sum::<f64>()
                / train.len() as f64;
            assert!(mean.abs() <= 1e-9, "feature {i} mean {mean}");
            assert!((var.sqrt() - 1.0).abs() <= 1e-6, "feature {i} std {}", var.sqrt());
        }
    }

    #[test]
    fn normalization_handles_zero_currents() {
        let norm = Normalization {
            means: vec![0.0; 3],
            stds: vec![1.0; 3],
            current_floor: CURRENT_FLOOR,
        };
        let x = normalize_features(&[0.0, 0.0, 0.0], &norm);
        assert!(x.iter().all(|v| v.is_finite()));
        assert!((x[0] - (-12.0)).abs() < 1e-12);
    }

    #[test]
    fn normalization_centers_mean_current() {
        let mean = -4.2;
        let norm = Normalization {
            means: vec![mean],
            stds: vec![1.0],
            current_floor: CURRENT_FLOOR,
        };
        let raw = 10f64.powf(mean) - CURRENT_FLOOR;
        let x = normalize_features(&[raw], &norm);
        assert!(x[0].abs() <= 1e-9, "expected centered feature, got {}", x[0]);
    }

    #[test]
    fn label_round_trip_is_tight() {
        let bounds = TargetBounds { l_min: 1e-7, l_max: 5e-6 };
        for &l in &[1e-7, 3.7e-7, 1e-6, 4.999e-6, 5e-6] {
            let y = normalize_label(l, &bounds);
            let back = denormalize_label(y, &bounds);
            assert!((back - l).abs() / l <= 1e-9, "l={l}: back={back}");
        }
        assert!((denormalize_label(0.0, &bounds) - 1e-7).abs() / 1e-7 <= 1e-12);
        assert!((denormalize_label(1.0, &bounds) - 5e-6).abs() / 5e-6 <= 1e-12);
    }

    #[test]
    fn write_read_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let ds = build_small(29);
        write_dataset(&ds, dir.path()).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn rewrites_are_byte_identical() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        write_dataset(&build_small(31), dir_a.path()).unwrap();
        write_dataset(&build_small(31), dir_b.path()).unwrap();
        for name in ["manifest.json", "data.csv"] {
            let a = fs::read(dir_a.path().join(name)).unwrap();
            let b = fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between identical builds");
        }
    }

    #[test]
    fn unknown_schema_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&build_small(37), dir.path()).unwrap();
        let manifest_path = dir.path().join("manifest.json");
        let text = fs::read_to_string(&manifest_path)
            .unwrap()
            .replace("\"schema_version\": 1", "\"schema_version\": 999");
        fs::write(&manifest_path, text).unwrap();
        match read_dataset(dir.path()) {
            Err(DatasetError::SchemaMismatch { found: 999, expected: 1 }) => {}
            other => panic!("expected SchemaMismatch, got {other:?}"),
        }
    }

    #[test]
    fn truncated_rows_are_rejected_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&build_small(41), dir.path()).unwrap();
        let csv_path = dir.path().join("data.csv");
        let mut lines: Vec<String> =
            fs::read_to_string(&csv_path).unwrap().lines().map(String::from).collect();
        lines[5] = lines[5].rsplit_once(',').unwrap().0.to_string(); // drop last column
        fs::write(&csv_path, lines.join("\n") + "\n").unwrap();
        match read_dataset(dir.path()) {
            Err(DatasetError::CorruptData { line: 6, .. }) => {}
            other => panic!("expected CorruptData at line 6, got {other:?}"),
        }
    }

    #[test]
    fn empty_train_split_is_rejected() {
        let err = build_dataset_with(
            10,
            &ParamRanges::default(),
            &small_grid(),
            &default_v_gs_list(),
            1,
            [0.0, 0.5, 0.5],
            SplitGranularity::Device,
        )
        .unwrap_err();
        assert!(matches!(err, DatasetError::InvalidRange { name: "split_fractions", .. }));
    }
}

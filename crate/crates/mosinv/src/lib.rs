//! Synthetic power-MOSFET transfer curves and MLP-based channel-length
//! retrieval.
//!
//! The crate is organized as a pipeline:
//!
//! - [`level3`]: the drain-current device model (intrinsic regions plus
//!   series-resistance feedback at the terminals).
//! - [`dataset`]: seeded parameter sampling, curve generation, feature
//!   normalization, split assignment, and the on-disk dataset format.
//! - [`nn`]: a from-scratch dense MLP with backprop, Adam, and the
//!   regression metrics used for reporting.
//! - [`trainer`]: the training loop, per-epoch reporting, model
//!   checkpoints, and single-curve prediction.
//!
//! Everything downstream of the two user-visible seeds (dataset seed,
//! training seed) is deterministic; regenerating with the same inputs
//! reproduces on-disk artifacts byte for byte.

pub mod dataset;
pub mod level3;
pub mod nn;
pub mod trainer;

mod seed;

pub use dataset::{
    CurveSample, Dataset, DatasetError, DatasetManifest, Normalization, ParamRange, ParamRanges,
    SamplingLaw, Split, SplitGranularity, TargetBounds,
};
pub use level3::{BiasPoint, DeviceParams, EffectiveParams, SolveError, VdsGrid};
pub use nn::{Activation, AdamState, ForwardCache, Gradients, MlpConfig, MlpModel, NnError};
pub use trainer::{
    Checkpoint, DataContext, ReportRow, SplitMetrics, TrainError, TrainReport, TrainSettings,
};

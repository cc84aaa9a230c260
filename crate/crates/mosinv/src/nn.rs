//! Dense feed-forward regression network with hand-rolled backpropagation
//! and Adam, written against no external numerics so every arithmetic step
//! is pinned down for reproducibility.
//!
//! Conventions: weights are row-major (`weights[i * fan_out + j]` connects
//! input `i` to unit `j`), hidden layers share one activation, the output
//! layer is identity with width 1, and the batch loss is the mean of
//! squared errors (no 1/2 factor), so the output delta for one pattern is
//! `(2 / batch_size) * (prediction - target)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Hidden-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    /// Logistic unit with slope parameter: `f(net) = 1 / (1 + exp(-k * net))`.
    Sigmoid { k: f64 },
}

impl Activation {
    fn apply(&self, net: f64) -> f64 {
        match *self {
            // The derivative below takes the zero branch at net == 0.
            Activation::Relu => {
                if net > 0.0 {
                    net
                } else {
                    0.0
                }
            }
            Activation::Sigmoid { k } => 1.0 / (1.0 + (-(k * net)).exp()),
        }
    }

    /// Derivative given both the pre-activation and the activation output.
    fn slope(&self, net: f64, out: f64) -> f64 {
        match *self {
            Activation::Relu => {
                if net > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid { k } => k * out * (1.0 - out),
        }
    }
}

/// Network shape and initialization inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    /// Widths from input to output, e.g. `[100, 128, 64, 32, 16, 1]`.
    pub layer_widths: Vec<usize>,
    pub hidden_activation: Activation,
    pub init_seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            layer_widths: vec![100, 128, 64, 32, 16, 1],
            hidden_activation: Activation::Relu,
            init_seed: 0,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.layer_widths.len() < 2 {
            return Err(NnError::InvalidConfig {
                reason: "need at least an input and an output layer".into(),
            });
        }
        if self.layer_widths.iter().any(|&w| w == 0) {
            return Err(NnError::InvalidConfig { reason: "layer widths must be positive".into() });
        }
        if *self.layer_widths.last().unwrap() != 1 {
            return Err(NnError::InvalidConfig {
                reason: "output layer must have width 1".into(),
            });
        }
        if let Activation::Sigmoid { k } = self.hidden_activation {
            if !(k.is_finite() && k > 0.0) {
                return Err(NnError::InvalidConfig {
                    reason: format!("sigmoid slope must be positive and finite, got {k}"),
                });
            }
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }
}

/// One dense layer, weights row-major over (fan_in, fan_out).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Weights plus the config that shaped them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub config: MlpConfig,
    pub layers: Vec<DenseLayer>,
}

/// Network failures.
#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("invalid network configuration: {reason}")]
    InvalidConfig { reason: String },
    #[error("metric needs at least one sample")]
    EmptyInput,
    #[error("prediction/target length mismatch: {preds} vs {targets}")]
    LengthMismatch { preds: usize, targets: usize },
    #[error("metric undefined: {reason}")]
    DegenerateTarget { reason: String },
}

/// Builds a model with He-uniform weights, `+-sqrt(6 / fan_in)` per layer,
/// and zero biases. Weights are drawn layer by layer in storage order, so
/// the layout is part of the seed contract.
pub fn init_model(config: &MlpConfig) -> Result<MlpModel, NnError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
    let mut layers = Vec::with_capacity(config.layer_widths.len() - 1);
    for pair in config.layer_widths.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let bound = (6.0 / fan_in as f64).sqrt();
        let weights = (0..fan_in * fan_out)
            .map(|_| {
                let u: f64 = rng.gen();
                -bound + 2.0 * bound * u
            })
            .collect();
        layers.push(DenseLayer { fan_in, fan_out, weights, biases: vec![0.0; fan_out] });
    }
    Ok(MlpModel { config: config.clone(), layers })
}

/// Reusable per-pattern activations: `outs[0]` is the input, `outs[k + 1]`
/// and `nets[k]` belong to layer `k`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub outs: Vec<Vec<f64>>,
    pub nets: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn new(config: &MlpConfig) -> Self {
        let outs = config.layer_widths.iter().map(|&w| vec![0.0; w]).collect();
        let nets = config.layer_widths[1..].iter().map(|&w| vec![0.0; w]).collect();
        ForwardCache { outs, nets }
    }
}

impl MlpModel {
    /// Single-pattern inference.
    pub fn forward(&self, input: &[f64]) -> f64 {
        let mut cache = ForwardCache::new(&self.config);
        self.forward_cached(input, &mut cache)
    }

    /// Inference that records every net and activation for backprop.
    pub fn forward_cached(&self, input: &[f64], cache: &mut ForwardCache) -> f64 {
        assert_eq!(input.len(), self.config.input_width(), "input width mismatch");
        cache.outs[0].copy_from_slice(input);
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            for j in 0..layer.fan_out {
                let mut net = layer.biases[j];
                for i in 0..layer.fan_in {
                    net += cache.outs[k][i] * layer.weights[i * layer.fan_out + j];
                }
                cache.nets[k][j] = net;
                cache.outs[k + 1][j] = if k == last {
                    net // identity output layer
                } else {
                    self.config.hidden_activation.apply(net)
                };
            }
        }
        cache.outs[last + 1][0]
    }
}

/// Loss gradients, same shapes as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Gradients {
            weights: model.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: model.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    pub fn reset(&mut self) {
        for w in &mut self.weights {
            w.iter_mut().for_each(|v| *v = 0.0);
        }
        for b in &mut self.biases {
            b.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

/// Accumulates this pattern's contribution to the batch-mean-loss gradient
/// into `grads`. `cache` must hold the forward pass of the same pattern.
pub fn backward(
    model: &MlpModel,
    cache: &ForwardCache,
    target: f64,
    batch_size: usize,
    grads: &mut Gradients,
) {
    let last = model.layers.len() - 1;
    let prediction = cache.outs[last + 1][0];
    // d(mean over batch of (o - t)^2) / d(o) for one pattern
    let mut delta = vec![(2.0 / batch_size as f64) * (prediction - target)];

    for k in (0..model.layers.len()).rev() {
        let layer = &model.layers[k];
        for j in 0..layer.fan_out {
            let dj = delta[j];
            grads.biases[k][j] += dj;
            for i in 0..layer.fan_in {
                grads.weights[k][i * layer.fan_out + j] += cache.outs[k][i] * dj;
            }
        }
        if k == 0 {
            break;
        }
        let act = model.config.hidden_activation;
        let mut prev = vec![0.0; layer.fan_in];
        for (i, p) in prev.iter_mut().enumerate() {
            let mut sum = 0.0;
            for j in 0..layer.fan_out {
                sum += layer.weights[i * layer.fan_out + j] * delta[j];
            }
            *p = sum * act.slope(cache.nets[k - 1][i], cache.outs[k][i]);
        }
        delta = prev;
    }
}

/// Adam moment buffers plus hyperparameters; one state per trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Completed update count; bias correction uses `t + 1` internally.
    pub t: u64,
    pub m_weights: Vec<Vec<f64>>,
    pub v_weights: Vec<Vec<f64>>,
    pub m_biases: Vec<Vec<f64>>,
    pub v_biases: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(model: &MlpModel) -> Self {
        AdamState {
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            epsilon: DEFAULT_EPSILON,
            t: 0,
            m_weights: model.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            v_weights: model.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            m_biases: model.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
            v_biases: model.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }
}

/// One Adam update. The denominator is `max(sqrt(v_hat), epsilon)`, which
/// keeps the first step magnitude at exactly `lr` for any nonzero constant
/// gradient, tiny or huge.
pub fn adam_step(model: &mut MlpModel, grads: &Gradients, state: &mut AdamState, lr: f64) {
    state.t += 1;
    let bc1 = 1.0 - state.beta1.powi(state.t as i32);
    let bc2 = 1.0 - state.beta2.powi(state.t as i32);

    let update = |param: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
        *m = state.beta1 * *m + (1.0 - state.beta1) * g;
        *v = state.beta2 * *v + (1.0 - state.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *param -= lr * m_hat / v_hat.sqrt().max(state.epsilon);
    };

    for (k, layer) in model.layers.iter_mut().enumerate() {
        for (idx, w) in layer.weights.iter_mut().enumerate() {
            update(w, grads.weights[k][idx], &mut state.m_weights[k][idx], &mut state.v_weights[k][idx]);
        }
        for (idx, b) in layer.biases.iter_mut().enumerate() {
            update(b, grads.biases[k][idx], &mut state.m_biases[k][idx], &mut state.v_biases[k][idx]);
        }
    }
}

/// Regression error measures shared by training reports and evaluation.
pub mod metrics {
    use super::NnError;

    fn check(preds: &[f64], targets: &[f64]) -> Result<(), NnError> {
        if preds.len() != targets.len() {
            return Err(NnError::LengthMismatch { preds: preds.len(), targets: targets.len() });
        }
        if preds.is_empty() {
            return Err(NnError::EmptyInput);
        }
        Ok(())
    }

    /// Mean squared error.
    pub fn mse(preds: &[f64], targets: &[f64]) -> Result<f64, NnError> {
        check(preds, targets)?;
        let n = preds.len() as f64;
        Ok(preds.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n)
    }

    /// Mean squared log error, `mean((ln(1 + max(0, p)) - ln(1 + t))^2)`.
    /// Predictions are floored at zero; targets must exceed -1.
    pub fn msle(preds: &[f64], targets: &[f64]) -> Result<f64, NnError> {
        check(preds, targets)?;
        let n = preds.len() as f64;
        let mut sum = 0.0;
        for (p, t) in preds.iter().zip(targets) {
            if *t <= -1.0 {
                return Err(NnError::DegenerateTarget {
                    reason: format!("msle target {t} is at or below -1"),
                });
            }
            let d = p.max(0.0).ln_1p() - t.ln_1p();
            sum += d * d;
        }
        Ok(sum / n)
    }

    /// Mean absolute error.
    pub fn mae(preds: &[f64], targets: &[f64]) -> Result<f64, NnError> {
        check(preds, targets)?;
        let n = preds.len() as f64;
        Ok(preds.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum::<f64>() / n)
    }

    /// Mean absolute percentage error, `100 * mean(|p - t| / |t|)`.
    /// Any zero target makes the measure undefined.
    pub fn mape_percent(preds: &[f64], targets: &[f64]) -> Result<f64, NnError> {
        check(preds, targets)?;
        let n = preds.len() as f64;
        let mut sum = 0.0;
        for (p, t) in preds.iter().zip(targets) {
            if *t == 0.0 {
                return Err(NnError::DegenerateTarget {
                    reason: "mape undefined for a zero target".into(),
                });
            }
            sum += (p - t).abs() / t.abs();
        }
        Ok(100.0 * sum / n)
    }

    /// All four measures over one prediction set.
    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct MetricSet {
        pub mse: f64,
        pub msle: f64,
        pub mae: f64,
        pub mape_percent: f64,
    }

    pub fn metric_set(preds: &[f64], targets: &[f64]) -> Result<MetricSet, NnError> {
        Ok(MetricSet {
            mse: mse(preds, targets)?,
            msle: msle(preds, targets)?,
            mae: mae(preds, targets)?,
            mape_percent: mape_percent(preds, targets)?,
        })
    }
}

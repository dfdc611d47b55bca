//! The booster network: a fully connected d -> 128 -> 128 -> 1 perceptron
//! with rectifier hidden units and a logistic output, trained by mini-batch
//! Adam on continuous targets in [0, 1].

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

pub const HIDDEN_WIDTH: usize = 128;
pub const CHECKPOINT_VERSION: u32 = 1;

/// Outputs are kept strictly inside (0, 1) even when the logistic saturates.
const OUTPUT_MARGIN: f64 = f64::EPSILON;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("input has {got} columns, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{rows} rows but {targets} targets")]
    LengthMismatch { rows: usize, targets: usize },
    #[error("targets must be normalized to [0, 1]")]
    NotNormalized,
    #[error("invalid training spec: {0}")]
    InvalidSpec(String),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    SquaredError,
    CrossEntropy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSpec {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub loss: LossKind,
    pub shuffle_seed: u64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            epochs: 10,
            // Sized for datasets of a few hundred rows. A batch of 256 at
            // lr 0.001 yields one optimizer step per epoch there and leaves
            // the network near its initialization.
            batch_size: 32,
            learning_rate: 0.01,
            loss: LossKind::SquaredError,
            shuffle_seed: 0,
        }
    }
}

impl TrainSpec {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.epochs == 0 {
            return Err(NnError::InvalidSpec("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(NnError::InvalidSpec("batch size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NnError::InvalidSpec("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// One affine layer, `out = input . weights + bias` with weights stored
/// `fan_in x fan_out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros_like(&self) -> Self {
        Self {
            weights: Array2::zeros(self.weights.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
        }
    }

    fn apply(&self, input: ArrayView2<f64>) -> Array2<f64> {
        input.dot(&self.weights) + &self.bias
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    layers: Vec<Dense>,
    seed: u64,
}

/// Per-layer gradients, shaped like the model's layers.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|g| g.weights.iter().chain(g.bias.iter()).map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }
}

struct ForwardCache {
    /// Layer inputs: the data, then each hidden activation.
    inputs: Vec<Array2<f64>>,
    /// Hidden pre-activations (for the rectifier mask).
    hidden_pre: Vec<Array2<f64>>,
    logits: Array1<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl MlpModel {
    /// The default booster architecture, d -> 128 -> 128 -> 1.
    pub fn new(input_dim: usize, seed: u64) -> Self {
        Self::with_hidden(input_dim, &[HIDDEN_WIDTH, HIDDEN_WIDTH], seed)
    }

    /// Weights uniform in +-1/sqrt(fan_in), biases zero.
    pub fn with_hidden(input_dim: usize, hidden: &[usize], seed: u64) -> Self {
        assert!(input_dim >= 1, "input dimension must be positive");
        let mut rng = rng::stream(seed);
        let widths: Vec<usize> = std::iter::once(input_dim)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(1))
            .collect();
        let layers = widths
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                Dense {
                    weights: Array2::from_shape_simple_fn((w[0], w[1]), || {
                        rng::uniform_range(&mut rng, -bound, bound)
                    }),
                    bias: Array1::zeros(w[1]),
                }
            })
            .collect();
        Self { layers, seed }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    fn check_input(&self, x: ArrayView2<f64>) -> Result<(), NnError> {
        if x.ncols() != self.input_dim() {
            return Err(NnError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        Ok(())
    }

    fn forward_cached(&self, x: ArrayView2<f64>) -> ForwardCache {
        let (hidden, output) = self.layers.split_at(self.layers.len() - 1);
        let mut inputs = vec![x.to_owned()];
        let mut hidden_pre = Vec::with_capacity(hidden.len());
        for layer in hidden {
            let pre = layer.apply(inputs.last().expect("non-empty").view());
            inputs.push(pre.mapv(|v| v.max(0.0)));
            hidden_pre.push(pre);
        }
        let logits = output[0]
            .apply(inputs.last().expect("non-empty").view())
            .index_axis_move(Axis(1), 0);
        ForwardCache {
            inputs,
            hidden_pre,
            logits,
        }
    }

    /// Per-row scores in (0, 1).
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Vec<f64>, NnError> {
        self.check_input(x)?;
        if x.nrows() == 0 {
            return Ok(Vec::new());
        }
        Ok(self
            .forward_cached(x)
            .logits
            .iter()
            .map(|&z| sigmoid(z).clamp(OUTPUT_MARGIN, 1.0 - OUTPUT_MARGIN))
            .collect())
    }

    /// Mean loss over all rows.
    pub fn loss(&self, x: ArrayView2<f64>, y: &[f64], kind: LossKind) -> Result<f64, NnError> {
        self.check_input(x)?;
        check_targets(x.nrows(), y)?;
        let logits = self.forward_cached(x).logits;
        Ok(mean_loss(logits.view(), y, kind))
    }

    /// Analytic gradient of the mean loss over all rows.
    pub fn gradients(&self, x: ArrayView2<f64>, y: &[f64], kind: LossKind) -> Result<Gradients, NnError> {
        self.check_input(x)?;
        check_targets(x.nrows(), y)?;
        Ok(self.backprop(x, y, kind))
    }

    fn backprop(&self, x: ArrayView2<f64>, y: &[f64], kind: LossKind) -> Gradients {
        let cache = self.forward_cached(x);
        let batch = x.nrows() as f64;
        let mut delta: Array2<f64> = Array1::from_iter(cache.logits.iter().zip(y).map(|(&z, &t)| {
            let p = sigmoid(z);
            match kind {
                LossKind::SquaredError => 2.0 * (p - t) * p * (1.0 - p) / batch,
                LossKind::CrossEntropy => (p - t) / batch,
            }
        }))
        .insert_axis(Axis(1));

        let mut grads: Vec<Dense> = self.layers.iter().map(Dense::zeros_like).collect();
        for l in (0..self.layers.len()).rev() {
            grads[l].weights = cache.inputs[l].t().dot(&delta);
            grads[l].bias = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut upstream = delta.dot(&self.layers[l].weights.t());
                Zip::from(&mut upstream)
                    .and(&cache.hidden_pre[l - 1])
                    .for_each(|g, &pre| {
                        if pre <= 0.0 {
                            *g = 0.0;
                        }
                    });
                delta = upstream;
            }
        }
        Gradients { layers: grads }
    }

    /// Mini-batch Adam on `(x, y)`; returns the mean training loss of each
    /// epoch. Optimizer moments start fresh on every call.
    pub fn train(
        &mut self,
        x: ArrayView2<f64>,
        y: &[f64],
        spec: &TrainSpec,
    ) -> Result<Vec<f64>, NnError> {
        spec.validate()?;
        self.check_input(x)?;
        check_targets(x.nrows(), y)?;
        if y.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(NnError::NotNormalized);
        }
        let n = x.nrows();
        let mut adam = Adam::new(self, spec.learning_rate);
        let mut rng = rng::stream(spec.shuffle_seed);
        let mut order: Vec<usize> = (0..n).collect();
        let mut epoch_losses = Vec::with_capacity(spec.epochs);
        for _ in 0..spec.epochs {
            rng::shuffle(&mut rng, &mut order);
            let mut total = 0.0;
            for chunk in order.chunks(spec.batch_size) {
                let xb = x.select(Axis(0), chunk);
                let yb: Vec<f64> = chunk.iter().map(|&i| y[i]).collect();
                let grads = self.backprop(xb.view(), &yb, spec.loss);
                adam.step(self, &grads);
                total += self.loss(xb.view(), &yb, spec.loss)? * chunk.len() as f64;
            }
            epoch_losses.push(total / n as f64);
        }
        Ok(epoch_losses)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            model: self.clone(),
        }
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<(), NnError> {
        let path = path.as_ref();
        let err = |message: String| NnError::Checkpoint {
            path: path.display().to_string(),
            message,
        };
        let text = serde_json::to_string(&self.to_checkpoint()).map_err(|e| err(e.to_string()))?;
        fs::write(path, text).map_err(|e| err(e.to_string()))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self, NnError> {
        let path = path.as_ref();
        let err = |message: String| NnError::Checkpoint {
            path: path.display().to_string(),
            message,
        };
        let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(err(format!("unsupported checkpoint version {}", ckpt.version)));
        }
        Ok(ckpt.model)
    }
}

/// Versioned parameter blob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub model: MlpModel,
}

fn check_targets(rows: usize, y: &[f64]) -> Result<(), NnError> {
    if rows != y.len() {
        return Err(NnError::LengthMismatch {
            rows,
            targets: y.len(),
        });
    }
    Ok(())
}

fn mean_loss(logits: ArrayView1<f64>, y: &[f64], kind: LossKind) -> f64 {
    let total: f64 = logits
        .iter()
        .zip(y)
        .map(|(&z, &t)| match kind {
            LossKind::SquaredError => (sigmoid(z) - t).powi(2),
            // -[t log p + (1 - t) log(1 - p)] written in terms of the logit.
            LossKind::CrossEntropy => softplus(z) - t * z,
        })
        .sum();
    total / y.len() as f64
}

struct Adam {
    lr: f64,
    step: i32,
    first: Vec<Dense>,
    second: Vec<Dense>,
}

impl Adam {
    fn new(model: &MlpModel, lr: f64) -> Self {
        let zeros: Vec<Dense> = model.layers.iter().map(Dense::zeros_like).collect();
        Self {
            lr,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    fn step(&mut self, model: &mut MlpModel, grads: &Gradients) {
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.step);
        let c2 = 1.0 - ADAM_BETA2.powi(self.step);
        let lr = self.lr;
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPSILON);
        };
        for (l, layer) in model.layers.iter_mut().enumerate() {
            Zip::from(&mut layer.weights)
                .and(&mut self.first[l].weights)
                .and(&mut self.second[l].weights)
                .and(&grads.layers[l].weights)
                .for_each(|p, m, v, &g| update(p, m, v, g));
            Zip::from(&mut layer.bias)
                .and(&mut self.first[l].bias)
                .and(&mut self.second[l].bias)
                .and(&grads.layers[l].bias)
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
    }
}

/// Step used for central finite differences.
pub const FINITE_DIFFERENCE_STEP: f64 = 1e-5;
/// Gradient magnitudes below this are compared absolutely rather than
/// relatively, since finite-difference round-off dominates there.
pub const GRADIENT_CHECK_FLOOR: f64 = 1e-6;

/// Largest relative disagreement between backpropagated gradients and
/// central finite differences over every parameter.
pub fn gradient_check(model: &MlpModel, x: ArrayView2<f64>, y: &[f64], kind: LossKind) -> Result<f64, NnError> {
    let analytic = model.gradients(x, y, kind)?;
    let mut probe = model.clone();
    let h = FINITE_DIFFERENCE_STEP;
    let mut worst: f64 = 0.0;

    let mut compare = |probe: &mut MlpModel, get: &dyn Fn(&mut MlpModel) -> &mut f64, exact: f64| -> Result<(), NnError> {
        let original = *get(probe);
        *get(probe) = original + h;
        let plus = probe.loss(x, y, kind)?;
        *get(probe) = original - h;
        let minus = probe.loss(x, y, kind)?;
        *get(probe) = original;
        let numeric = (plus - minus) / (2.0 * h);
        let scale = exact.abs().max(numeric.abs()).max(GRADIENT_CHECK_FLOOR);
        worst = worst.max((exact - numeric).abs() / scale);
        Ok(())
    };

    for l in 0..model.layers.len() {
        let (rows, cols) = model.layers[l].weights.dim();
        for i in 0..rows {
            for j in 0..cols {
                compare(&mut probe, &|m| &mut m.layers[l].weights[[i, j]], analytic.layers[l].weights[[i, j]])?;
            }
        }
        for j in 0..model.layers[l].bias.len() {
            compare(&mut probe, &|m| &mut m.layers[l].bias[j], analytic.layers[l].bias[j])?;
        }
    }
    Ok(worst)
}

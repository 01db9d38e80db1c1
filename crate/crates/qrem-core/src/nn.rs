//! The neural-network mitigator: a fully connected network approximating the
//! inverse noise map, with ReLU hidden layers and a softmax output, trained
//! by minibatch Adam on categorical cross-entropy.
//!
//! Training is single-threaded with a fixed evaluation order; identical
//! (seed, config, dataset) triples reproduce the final weights bit for bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ProbabilityDistribution;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::metrics;
use crate::seeds::derive_seed;

/// Floor applied inside the cross-entropy logarithm.
const LOG_CLAMP: f64 = 1e-12;

/// Minibatch size: a fixed count or one batch spanning the whole set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchSize {
    Full,
    Fixed(usize),
}

impl Serialize for BatchSize {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BatchSize::Full => s.serialize_str("full"),
            BatchSize::Fixed(b) => s.serialize_u64(*b as u64),
        }
    }
}

impl<'de> Deserialize<'de> for BatchSize {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl serde::de::Visitor<'_> for V {
            type Value = BatchSize;

            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a batch size or the string \"full\"")
            }

            fn visit_u64<E: serde::de::Error>(self, v: u64) -> std::result::Result<BatchSize, E> {
                Ok(BatchSize::Fixed(v as usize))
            }

            fn visit_i64<E: serde::de::Error>(self, v: i64) -> std::result::Result<BatchSize, E> {
                usize::try_from(v)
                    .map(BatchSize::Fixed)
                    .map_err(|_| E::custom(format!("negative batch size {v}")))
            }

            fn visit_str<E: serde::de::Error>(self, v: &str) -> std::result::Result<BatchSize, E> {
                if v == "full" {
                    Ok(BatchSize::Full)
                } else {
                    Err(E::custom(format!("expected \"full\", got {v:?}")))
                }
            }
        }
        d.deserialize_any(V)
    }
}

fn default_batch_size() -> BatchSize {
    BatchSize::Fixed(32)
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_epsilon() -> f64 {
    1e-8
}

/// Hyperparameters for one training run. The per-qubit-count values used in
/// the benchmark presets live in the harness crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: BatchSize,
    #[serde(default = "default_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "default_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "default_epsilon")]
    pub adam_epsilon: f64,
    #[serde(default)]
    pub seed: u64,
    /// When set, `train` returns the initial model untouched with an empty
    /// loss history.
    #[serde(default)]
    pub dry_run: bool,
}

impl TrainingConfig {
    /// Width 5·2^n, 300 epochs, Adam defaults; layer count and learning rate
    /// are problem-specific and left at 1 and 1e-3.
    pub fn defaults_for(n: usize) -> Self {
        TrainingConfig {
            hidden_layers: 1,
            hidden_width: 5 * (1 << n),
            epochs: 300,
            learning_rate: 1e-3,
            batch_size: default_batch_size(),
            adam_beta1: default_beta1(),
            adam_beta2: default_beta2(),
            adam_epsilon: default_epsilon(),
            seed: 0,
            dry_run: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers == 0 {
            return Err(Error::InvalidConfig("need at least one hidden layer".into()));
        }
        if self.hidden_width == 0 {
            return Err(Error::InvalidConfig("hidden width must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if let BatchSize::Fixed(0) = self.batch_size {
            return Err(Error::InvalidConfig("batch size must be >= 1".into()));
        }
        for (name, v) in [("beta1", self.adam_beta1), ("beta2", self.adam_beta2)] {
            if !v.is_finite() || !(0.0..1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("adam {name} = {v} outside [0, 1)")));
            }
        }
        if !(self.adam_epsilon.is_finite() && self.adam_epsilon > 0.0) {
            return Err(Error::InvalidConfig("adam epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Fully connected ReLU network with a softmax output layer; 2^n nodes on
/// both ends.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    num_qubits: usize,
    layer_sizes: Vec<usize>,
    /// Per layer, row-major (out × in).
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    config: TrainingConfig,
    train_fingerprint: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct ModelWire {
    n: usize,
    layer_sizes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    config: TrainingConfig,
    train_fingerprint: Option<String>,
}

impl MlpModel {
    /// He-uniform initialized weights, zero biases, architecture
    /// [2^n, width × layers, 2^n], seeded by `config.seed`.
    pub fn init(num_qubits: usize, config: &TrainingConfig) -> Result<Self> {
        if num_qubits == 0 {
            return Err(Error::InvalidConfig("need at least one qubit".into()));
        }
        config.validate()?;
        let dim = 1usize << num_qubits;
        let mut layer_sizes = Vec::with_capacity(config.hidden_layers + 2);
        layer_sizes.push(dim);
        layer_sizes.extend(std::iter::repeat_n(config.hidden_width, config.hidden_layers));
        layer_sizes.push(dim);

        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "init"));
        let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
        let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
        for l in 0..layer_sizes.len() - 1 {
            let fan_in = layer_sizes[l];
            let fan_out = layer_sizes[l + 1];
            let limit = (6.0 / fan_in as f64).sqrt();
            let w: Vec<f64> =
                (0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)).collect();
            weights.push(w);
            biases.push(vec![0.0; fan_out]);
        }
        Ok(MlpModel {
            num_qubits,
            layer_sizes,
            weights,
            biases,
            config: config.clone(),
            train_fingerprint: None,
        })
    }

    /// Rebuilds a model from raw parts, validating shapes and finiteness.
    pub fn from_parts(
        num_qubits: usize,
        layer_sizes: Vec<usize>,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
        config: TrainingConfig,
        train_fingerprint: Option<String>,
    ) -> Result<Self> {
        let dim = 1usize << num_qubits;
        if num_qubits == 0 {
            return Err(Error::InvalidConfig("need at least one qubit".into()));
        }
        if layer_sizes.len() < 3
            || layer_sizes.first() != Some(&dim)
            || layer_sizes.last() != Some(&dim)
        {
            return Err(Error::InvalidConfig(format!(
                "layer sizes {layer_sizes:?} do not match 2^{num_qubits} ends"
            )));
        }
        let layers = layer_sizes.len() - 1;
        if weights.len() != layers || biases.len() != layers {
            return Err(Error::InvalidConfig("weights/biases layer count mismatch".into()));
        }
        for l in 0..layers {
            let expected_w = layer_sizes[l] * layer_sizes[l + 1];
            if weights[l].len() != expected_w {
                return Err(Error::DimensionMismatch {
                    expected: expected_w,
                    actual: weights[l].len(),
                });
            }
            if biases[l].len() != layer_sizes[l + 1] {
                return Err(Error::DimensionMismatch {
                    expected: layer_sizes[l + 1],
                    actual: biases[l].len(),
                });
            }
            if weights[l].iter().chain(&biases[l]).any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig(format!("layer {l} has non-finite parameters")));
            }
        }
        Ok(MlpModel { num_qubits, layer_sizes, weights, biases, config, train_fingerprint })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn config(&self) -> &TrainingConfig {
        &self.config
    }

    /// Hash of the dataset the model was trained on, if any.
    pub fn train_fingerprint(&self) -> Option<&str> {
        self.train_fingerprint.as_deref()
    }

    /// ReLU hidden layers, softmax output.
    pub fn forward(&self, input: &ProbabilityDistribution) -> Result<ProbabilityDistribution> {
        if input.dim() != self.layer_sizes[0] {
            return Err(Error::DimensionMismatch {
                expected: self.layer_sizes[0],
                actual: input.dim(),
            });
        }
        let out = self.forward_values(input.values());
        ProbabilityDistribution::new(self.num_qubits, out)
    }

    fn forward_values(&self, input: &[f64]) -> Vec<f64> {
        let mut a = input.to_vec();
        let last = self.weights.len() - 1;
        for l in 0..=last {
            let mut z = affine(&self.weights[l], &self.biases[l], &a);
            if l < last {
                relu_inplace(&mut z);
            } else {
                softmax_inplace(&mut z);
            }
            a = z;
        }
        a
    }

    /// Forward pass keeping all layer activations and pre-activations.
    fn trace(&self, input: &[f64]) -> Trace {
        let layers = self.weights.len();
        let mut activations = Vec::with_capacity(layers + 1);
        let mut preactivations = Vec::with_capacity(layers);
        activations.push(input.to_vec());
        for l in 0..layers {
            let z = affine(&self.weights[l], &self.biases[l], &activations[l]);
            preactivations.push(z.clone());
            let mut a = z;
            if l < layers - 1 {
                relu_inplace(&mut a);
            } else {
                softmax_inplace(&mut a);
            }
            activations.push(a);
        }
        Trace { activations, preactivations }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let wire = ModelWire {
            n: self.num_qubits,
            layer_sizes: self.layer_sizes.clone(),
            weights: self.weights.clone(),
            biases: self.biases.clone(),
            config: self.config.clone(),
            train_fingerprint: self.train_fingerprint.clone(),
        };
        let file = File::create(path)?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, &wire)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let wire: ModelWire = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        MlpModel::from_parts(
            wire.n,
            wire.layer_sizes,
            wire.weights,
            wire.biases,
            wire.config,
            wire.train_fingerprint,
        )
    }
}

struct Trace {
    /// activations[0] is the input; activations[l+1] the output of layer l.
    activations: Vec<Vec<f64>>,
    preactivations: Vec<Vec<f64>>,
}

fn affine(weights: &[f64], biases: &[f64], input: &[f64]) -> Vec<f64> {
    let fan_in = input.len();
    let fan_out = biases.len();
    let mut out = biases.to_vec();
    for (r, slot) in out.iter_mut().enumerate().take(fan_out) {
        let row = &weights[r * fan_in..(r + 1) * fan_in];
        let mut acc = 0.0;
        for (w, x) in row.iter().zip(input) {
            acc += w * x;
        }
        *slot += acc;
    }
    out
}

fn relu_inplace(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

fn softmax_inplace(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v {
        *x /= sum;
    }
}

/// Categorical cross-entropy `−Σ target_i · ln(predicted_i)`, with predicted
/// entries floored at 1e-12.
pub fn cross_entropy_loss(
    predicted: &ProbabilityDistribution,
    target: &ProbabilityDistribution,
) -> Result<f64> {
    if predicted.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: predicted.dim(),
            actual: target.dim(),
        });
    }
    Ok(cross_entropy_values(predicted.values(), target.values()))
}

fn cross_entropy_values(predicted: &[f64], target: &[f64]) -> f64 {
    -predicted
        .iter()
        .zip(target)
        .map(|(&q, &t)| {
            if t == 0.0 {
                0.0
            } else {
                // f64::max would swallow a NaN prediction; the comparison
                // keeps it so diverged training is caught, not masked.
                let clamped = if q < LOG_CLAMP { LOG_CLAMP } else { q };
                t * clamped.ln()
            }
        })
        .sum::<f64>()
}

/// Gradients of the mean cross-entropy with respect to every weight and
/// bias, in the model's layer layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(model: &MlpModel) -> Self {
        Gradients {
            weights: model.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }
}

/// Analytic backpropagation for a batch of (observed input, ideal target)
/// pairs. Uses the softmax + cross-entropy simplification: the output-layer
/// error is `predicted − target`.
pub fn backward_gradients(
    model: &MlpModel,
    batch: &[(&ProbabilityDistribution, &ProbabilityDistribution)],
) -> Result<Gradients> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    let dim = model.layer_sizes[0];
    for (input, target) in batch {
        if input.dim() != dim || target.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, actual: input.dim() });
        }
    }
    let pairs: Vec<(&[f64], &[f64])> =
        batch.iter().map(|(i, t)| (i.values(), t.values())).collect();
    let (grads, _) = batch_gradients(model, &pairs);
    Ok(grads)
}

/// Backprop over a batch; returns mean gradients and the mean loss at the
/// current weights.
fn batch_gradients(model: &MlpModel, batch: &[(&[f64], &[f64])]) -> (Gradients, f64) {
    let mut grads = Gradients::zeros_like(model);
    let mut loss_sum = 0.0;
    let layers = model.weights.len();
    for &(input, target) in batch {
        let trace = model.trace(input);
        let output = &trace.activations[layers];
        loss_sum += cross_entropy_values(output, target);
        // Output-layer error for softmax + cross-entropy.
        let mut delta: Vec<f64> = output.iter().zip(target).map(|(y, t)| y - t).collect();
        for l in (0..layers).rev() {
            let a_in = &trace.activations[l];
            let fan_in = a_in.len();
            let gw = &mut grads.weights[l];
            for (r, &d) in delta.iter().enumerate() {
                grads.biases[l][r] += d;
                let row = &mut gw[r * fan_in..(r + 1) * fan_in];
                for (slot, &a) in row.iter_mut().zip(a_in) {
                    *slot += d * a;
                }
            }
            if l > 0 {
                let z_prev = &trace.preactivations[l - 1];
                let mut next = vec![0.0; fan_in];
                for (r, &d) in delta.iter().enumerate() {
                    let row = &model.weights[l][r * fan_in..(r + 1) * fan_in];
                    for (slot, &w) in next.iter_mut().zip(row) {
                        *slot += w * d;
                    }
                }
                for (x, &z) in next.iter_mut().zip(z_prev) {
                    if z <= 0.0 {
                        *x = 0.0;
                    }
                }
                delta = next;
            }
        }
    }
    let scale = 1.0 / batch.len() as f64;
    for g in grads.weights.iter_mut().chain(grads.biases.iter_mut()) {
        for v in g {
            *v *= scale;
        }
    }
    (grads, loss_sum * scale)
}

struct AdamState {
    m_w: Vec<Vec<f64>>,
    v_w: Vec<Vec<f64>>,
    m_b: Vec<Vec<f64>>,
    v_b: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    fn new(model: &MlpModel) -> Self {
        AdamState {
            m_w: model.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            v_w: model.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            m_b: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            v_b: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            step: 0,
        }
    }

    fn update(&mut self, model: &mut MlpModel, grads: &Gradients, cfg: &TrainingConfig) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.adam_beta1.powi(t);
        let bc2 = 1.0 - cfg.adam_beta2.powi(t);
        let apply = |params: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..params.len() {
                m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g[i];
                v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_epsilon);
            }
        };
        for l in 0..model.weights.len() {
            apply(&mut model.weights[l], &grads.weights[l], &mut self.m_w[l], &mut self.v_w[l]);
            apply(&mut model.biases[l], &grads.biases[l], &mut self.m_b[l], &mut self.v_b[l]);
        }
    }
}

/// Runs minibatch Adam on mean cross-entropy with observed distributions as
/// inputs and ideal ones as targets. Returns the trained model and the
/// per-epoch mean training loss (evaluated at the weights each batch was
/// visited with). Fully deterministic given the config seed.
pub fn train(
    model: MlpModel,
    train_set: &Dataset,
    config: &TrainingConfig,
) -> Result<(MlpModel, Vec<f64>)> {
    config.validate()?;
    let dim = 1usize << train_set.num_qubits();
    if model.layer_sizes[0] != dim {
        return Err(Error::DimensionMismatch { expected: model.layer_sizes[0], actual: dim });
    }
    if config.dry_run {
        return Ok((model, Vec::new()));
    }
    let n = train_set.len();
    let mut schedule_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "shuffle"));
    let mut schedule = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut schedule_rng);
        schedule.push(order);
    }
    train_with_schedule(model, train_set, config, &schedule)
}

/// Training loop with an explicit per-epoch visiting order. `train` derives
/// the schedule from the config seed; tests may pass one directly.
fn train_with_schedule(
    mut model: MlpModel,
    train_set: &Dataset,
    config: &TrainingConfig,
    schedule: &[Vec<usize>],
) -> Result<(MlpModel, Vec<f64>)> {
    let n = train_set.len();
    let inputs: Vec<&[f64]> =
        train_set.records().iter().map(|r| r.observed.values()).collect();
    let targets: Vec<&[f64]> = train_set.records().iter().map(|r| r.ideal.values()).collect();
    let batch_size = match config.batch_size {
        BatchSize::Full => n,
        BatchSize::Fixed(b) => b.min(n),
    };
    let mut adam = AdamState::new(&model);
    let mut history = Vec::with_capacity(schedule.len());
    for (epoch, order) in schedule.iter().enumerate() {
        let mut loss_weighted = 0.0;
        for (batch_index, chunk) in order.chunks(batch_size).enumerate() {
            let batch: Vec<(&[f64], &[f64])> =
                chunk.iter().map(|&i| (inputs[i], targets[i])).collect();
            let (grads, loss) = batch_gradients(&model, &batch);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: batch_index });
            }
            loss_weighted += loss * chunk.len() as f64;
            adam.update(&mut model, &grads, config);
        }
        history.push(loss_weighted / n as f64);
    }
    model.config = config.clone();
    model.train_fingerprint = Some(train_set.fingerprint());
    Ok((model, history))
}

/// Alias of [`MlpModel::forward`]: mitigates one observed distribution.
pub fn mitigate_nn(
    model: &MlpModel,
    observed: &ProbabilityDistribution,
) -> Result<ProbabilityDistribution> {
    model.forward(observed)
}

/// Mitigates a list of observed distributions, preserving order.
pub fn mitigate_nn_batch(
    model: &MlpModel,
    observed: &[ProbabilityDistribution],
) -> Result<Vec<ProbabilityDistribution>> {
    observed.iter().map(|p| model.forward(p)).collect()
}

/// Mean cross-entropy of the model over a dataset (observed → ideal).
pub fn mean_cross_entropy(model: &MlpModel, data: &Dataset) -> Result<f64> {
    let losses: Vec<f64> = data
        .records()
        .iter()
        .map(|r| {
            let out = model.forward(&r.observed)?;
            cross_entropy_loss(&out, &r.ideal)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(metrics::mean(&losses))
}

/// Result of a k-fold layer-count search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub best_layer_count: usize,
    /// (candidate layer count, mean held-out infidelity), in candidate order.
    pub scores: Vec<(usize, f64)>,
}

/// Balanced k-fold layout over `n` records: the first `n % k` folds take one
/// extra record; sizes are equal when `k` divides `n`.
pub fn fold_sizes(n: usize, k: usize) -> Vec<usize> {
    let base = n / k;
    let extra = n % k;
    (0..k).map(|f| base + usize::from(f < extra)).collect()
}

/// K-fold cross-validation over hidden-layer-count candidates, scored by mean
/// infidelity on the held-out fold. Ties go to the smaller layer count;
/// `k` is conventionally 5.
pub fn cross_validate(
    train_set: &Dataset,
    layer_candidates: &[usize],
    k: usize,
    config: &TrainingConfig,
) -> Result<CrossValidation> {
    if layer_candidates.is_empty() {
        return Err(Error::InvalidConfig("no layer candidates".into()));
    }
    if k < 2 {
        return Err(Error::InvalidConfig("cross-validation needs k >= 2".into()));
    }
    if train_set.len() < k {
        return Err(Error::InvalidConfig(format!(
            "dataset of {} records is too small for {k} folds",
            train_set.len()
        )));
    }
    config.validate()?;
    let n = train_set.len();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "cv-shuffle"));
    indices.shuffle(&mut rng);
    let mut folds = Vec::with_capacity(k);
    let mut cursor = 0;
    for size in fold_sizes(n, k) {
        folds.push(indices[cursor..cursor + size].to_vec());
        cursor += size;
    }

    let mut scores = Vec::with_capacity(layer_candidates.len());
    for &layers in layer_candidates {
        let mut fold_scores = Vec::with_capacity(k);
        for (f, holdout) in folds.iter().enumerate() {
            let train_records: Vec<_> = folds
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, fold)| fold.iter().map(|&i| train_set.records()[i].clone()))
                .collect();
            let fold_set = Dataset::new(
                train_set.num_qubits(),
                train_records,
                train_set.split_tag(),
                crate::dataset::Provenance {
                    text: format!("cv fold {f} (layers {layers})"),
                    seed: config.seed,
                },
            )?;
            let mut fold_cfg = config.clone();
            fold_cfg.hidden_layers = layers;
            fold_cfg.seed = derive_seed(config.seed, &format!("cv/L{layers}/fold{f}"));
            let model = MlpModel::init(train_set.num_qubits(), &fold_cfg)?;
            let (model, _) = train(model, &fold_set, &fold_cfg)?;
            let ifs: Vec<f64> = holdout
                .iter()
                .map(|&i| {
                    let r = &train_set.records()[i];
                    let out = model.forward(&r.observed)?;
                    metrics::infidelity(&r.ideal, &out)
                })
                .collect::<Result<Vec<f64>>>()?;
            fold_scores.push(metrics::mean(&ifs));
        }
        scores.push((layers, metrics::mean(&fold_scores)));
    }
    let best = scores
        .iter()
        .copied()
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)))
        .expect("non-empty candidates");
    Ok(CrossValidation { best_layer_count: best.0, scores })
}



#[cfg(test)]
mod divergence_tests {
    use super::*;
    use crate::channel::{LinearChannel, NoiseChannel, Shots};
    use crate::dataset::generate;

    #[test]
    fn exploding_training_aborts_with_diagnostic() {
        let ch = NoiseChannel::Linear(LinearChannel::identity(1).unwrap());
        let data = generate(1, 16, &ch, Shots::Count(128), 3).unwrap();
        let mut cfg = TrainingConfig::defaults_for(1);
        cfg.hidden_layers = 2;
        cfg.epochs = 20;
        cfg.learning_rate = 1e300;
        let model = MlpModel::init(1, &cfg).unwrap();
        match train(model, &data, &cfg) {
            Err(Error::NonFiniteLoss { .. }) => {}
            other => panic!("expected NonFiniteLoss, got {other:?}"),
        }
    }
}

//! Feed-forward binary classifier.
//!
//! Dense layers with rectifier hidden units and a single logistic output
//! neuron. The model exposes the class-1 probability, the pre-sigmoid logit
//! and their exact input gradients (reverse-mode through the layer stack).
//! Training is mini-batch Adam on binary cross-entropy over a seeded 85/15
//! split.
//!
//! Weights are stored row-major with shape `(outputs, inputs)`.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::seed;

const MODEL_FORMAT: &str = "ibs-model";
const MODEL_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HiddenActivation {
    Relu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputActivation {
    Logistic,
}

/// Layer sizes of the network, input dimension first and 1 last.
///
/// A two-entry spec (`[n, 1]`) is the affine logistic model used by the
/// closed-form oracles; everything else has at least one hidden layer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: HiddenActivation,
    pub output_activation: OutputActivation,
}

impl NetworkSpec {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        let spec = Self {
            layer_sizes,
            hidden_activation: HiddenActivation::Relu,
            output_activation: OutputActivation::Logistic,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `input_dim -> hidden... -> 1`.
    pub fn mlp(input_dim: usize, hidden: &[usize]) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input_dim);
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Self::new(sizes)
    }

    /// Five fully-connected hidden layers of ten rectifier units.
    pub fn five_by_ten(input_dim: usize) -> Result<Self> {
        Self::mlp(input_dim, &[10; 5])
    }

    /// A single affine layer followed by the logistic output.
    pub fn linear(input_dim: usize) -> Result<Self> {
        Self::new(vec![input_dim, 1])
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::config("a network needs an input and an output layer"));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::config("layer sizes must be positive"));
        }
        if *self.layer_sizes.last().unwrap() != 1 {
            return Err(Error::config("the output layer must have exactly one unit"));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn hidden_layers(&self) -> usize {
        self.layer_sizes.len() - 2
    }
}

/// One affine map `z = W a + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, weights: Vec<f64>, biases: Vec<f64>) -> Result<Self> {
        if weights.len() != inputs * outputs {
            return Err(Error::config(format!(
                "weight matrix has {} entries, expected {outputs}x{inputs}",
                weights.len()
            )));
        }
        if biases.len() != outputs {
            return Err(Error::config(format!(
                "bias vector has {} entries, expected {outputs}",
                biases.len()
            )));
        }
        if weights.iter().chain(&biases).any(|v| !v.is_finite()) {
            return Err(Error::config("non-finite parameter"));
        }
        Ok(Self { inputs, outputs, weights, biases })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    /// Row-major `(outputs, inputs)`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn row(&self, o: usize) -> &[f64] {
        &self.weights[o * self.inputs..(o + 1) * self.inputs]
    }

    fn affine(&self, a: &[f64]) -> Vec<f64> {
        (0..self.outputs)
            .map(|o| dot(self.row(o), a) + self.biases[o])
            .collect()
    }

    /// `W^T g`.
    fn backward(&self, g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.inputs];
        for (o, &go) in g.iter().enumerate() {
            if go == 0.0 {
                continue;
            }
            for (acc, w) in out.iter_mut().zip(self.row(o)) {
                *acc += w * go;
            }
        }
        out
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`logistic`].
pub fn logit_of(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Intermediate values of one forward pass.
struct Forward {
    /// `acts[0]` is the input, `acts[l]` the input of layer `l`.
    acts: Vec<Vec<f64>>,
    /// Pre-activations of every layer; the last one holds the logit.
    pre: Vec<Vec<f64>>,
}

impl Forward {
    fn logit(&self) -> f64 {
        self.pre.last().unwrap()[0]
    }
}

/// A binary classifier `f: R^n -> [0, 1]` returning P(class 1).
///
/// Immutable once built; evaluation only borrows it.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    spec: NetworkSpec,
    layers: Vec<Dense>,
    train_seed: u64,
}

impl TrainedModel {
    pub fn from_layers(spec: NetworkSpec, layers: Vec<Dense>, train_seed: u64) -> Result<Self> {
        spec.validate()?;
        if layers.len() != spec.layer_sizes.len() - 1 {
            return Err(Error::config(format!(
                "spec has {} affine layers, got {}",
                spec.layer_sizes.len() - 1,
                layers.len()
            )));
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.inputs != spec.layer_sizes[l] || layer.outputs != spec.layer_sizes[l + 1] {
                return Err(Error::config(format!(
                    "layer {l} is {}x{}, spec requires {}x{}",
                    layer.outputs,
                    layer.inputs,
                    spec.layer_sizes[l + 1],
                    spec.layer_sizes[l]
                )));
            }
        }
        Ok(Self { spec, layers, train_seed })
    }

    /// Builds a model from flat row-major weight matrices and bias vectors.
    pub fn from_parts(
        spec: NetworkSpec,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
        train_seed: u64,
    ) -> Result<Self> {
        spec.validate()?;
        if weights.len() != biases.len() {
            return Err(Error::config("weights and biases disagree on layer count"));
        }
        let layers = weights
            .into_iter()
            .zip(biases)
            .enumerate()
            .map(|(l, (w, b))| {
                let inputs = spec.layer_sizes.get(l).copied().unwrap_or(0);
                Dense::new(inputs, b.len(), w, b)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(spec, layers, train_seed)
    }

    /// He-style uniform fan-in initialization, zero biases.
    pub fn initialize(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = seed::rng(seed);
        let layers = spec
            .layer_sizes
            .windows(2)
            .map(|w| {
                let (inputs, outputs) = (w[0], w[1]);
                let limit = (6.0 / inputs as f64).sqrt();
                let weights = (0..inputs * outputs)
                    .map(|_| rng.random_range(-limit..limit))
                    .collect();
                Dense::new(inputs, outputs, weights, vec![0.0; outputs])
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(spec.clone(), layers, seed)
    }

    /// All parameters zero: predicts 0.5 everywhere.
    pub fn zeros(spec: &NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_sizes
            .windows(2)
            .map(|w| Dense::new(w[0], w[1], vec![0.0; w[0] * w[1]], vec![0.0; w[1]]))
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(spec.clone(), layers, 0)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn train_seed(&self) -> u64 {
        self.train_seed
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        Error::check_dim(self.input_dim(), x.len())
    }

    fn forward(&self, x: &[f64]) -> Forward {
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        acts.push(x.to_vec());
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(acts.last().unwrap());
            if l < last {
                acts.push(z.iter().map(|&v| v.max(0.0)).collect());
            }
            pre.push(z);
        }
        Forward { acts, pre }
    }

    /// Reverse pass seeded with `d out / d logit`; returns `d out / d x`.
    fn backward_input(&self, fwd: &Forward, seed_grad: f64) -> Vec<f64> {
        let mut g = vec![seed_grad];
        for l in (0..self.layers.len()).rev() {
            let mut gin = self.layers[l].backward(&g);
            if l > 0 {
                // rectifier derivative, 0 at the kink
                for (gi, &z) in gin.iter_mut().zip(&fwd.pre[l - 1]) {
                    if z <= 0.0 {
                        *gi = 0.0;
                    }
                }
            }
            g = gin;
        }
        g
    }

    /// Pre-sigmoid output.
    pub fn logit(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.forward(x).logit())
    }

    /// P(class 1 | x), always in `[0, 1]`.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(logistic(self.forward(x).logit()))
    }

    /// Probabilities for a batch of inputs.
    pub fn predict_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        xs.iter().map(|x| self.predict_proba(x)).collect()
    }

    /// Hard label with ties (exactly 0.5) going to class 0.
    pub fn predict_class(&self, x: &[f64]) -> Result<u8> {
        Ok(u8::from(self.predict_proba(x)? > 0.5))
    }

    /// Gradient of the class-1 probability with respect to the input.
    pub fn input_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let fwd = self.forward(x);
        let p = logistic(fwd.logit());
        Ok(self.backward_input(&fwd, p * (1.0 - p)))
    }

    /// Probability and its input gradient from a single forward pass.
    pub fn proba_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_input(x)?;
        let fwd = self.forward(x);
        let p = logistic(fwd.logit());
        Ok((p, self.backward_input(&fwd, p * (1.0 - p))))
    }

    /// Gradient of the logit with respect to the input.
    pub fn logit_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let fwd = self.forward(x);
        Ok(self.backward_input(&fwd, 1.0))
    }

    /// Pre-activations of every hidden layer (used to detect rectifier kinks).
    pub fn hidden_pre_activations(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_input(x)?;
        let mut pre = self.forward(x).pre;
        pre.pop();
        Ok(pre)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format: MODEL_FORMAT.to_owned(),
            version: MODEL_VERSION,
            spec: self.spec.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerFile {
                    rows: l.outputs,
                    cols: l.inputs,
                    weights: l.weights.clone(),
                    biases: l.biases.clone(),
                })
                .collect(),
            train_seed: self.train_seed,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT {
            return Err(Error::Parse {
                line: 1,
                message: format!("not a model file (format {:?})", file.format),
            });
        }
        if file.version != MODEL_VERSION {
            return Err(Error::Parse {
                line: 1,
                message: format!("unsupported model version {}", file.version),
            });
        }
        let layers = file
            .layers
            .into_iter()
            .map(|l| Dense::new(l.cols, l.rows, l.weights, l.biases))
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(file.spec, layers, file.train_seed)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

// Floats go through serde_json's shortest round-trip formatting, which is
// lossless for every finite f64.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    spec: NetworkSpec,
    layers: Vec<LayerFile>,
    train_seed: u64,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub split_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 15,
            batch_size: 128,
            weight_decay: 0.0,
            split_fraction: 0.85,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config("weight_decay must be non-negative"));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::config("split_fraction must lie in (0, 1)"));
        }
        Ok(())
    }

    /// The train/test split this configuration produces for `n` samples.
    pub fn split(&self, n: usize) -> Split {
        Split::seeded(n, self.split_fraction, seed::derive(self.seed, "split"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub f1: f64,
    pub train_loss_initial: f64,
    pub train_loss_final: f64,
    pub n_train: usize,
    pub n_test: usize,
}

/// Accuracy and class-1 F1 of `model` on the rows `indices` of `dataset`.
pub fn evaluate(model: &TrainedModel, dataset: &Dataset, indices: &[usize]) -> Result<(f64, f64)> {
    let (mut tp, mut fp, mut fn_, mut correct) = (0usize, 0usize, 0usize, 0usize);
    for &i in indices {
        let pred = model.predict_class(&dataset.features[i])?;
        let label = dataset.labels[i];
        if pred == label {
            correct += 1;
        }
        match (pred, label) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 1) => fn_ += 1,
            _ => {}
        }
    }
    let accuracy = if indices.is_empty() {
        0.0
    } else {
        correct as f64 / indices.len() as f64
    };
    let f1 = if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    };
    Ok((accuracy, f1))
}

/// `BCE(logistic(z), y)` evaluated stably from the logit.
fn bce_from_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// Mean binary cross-entropy over the rows `indices`.
pub fn bce_loss(model: &TrainedModel, dataset: &Dataset, indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for &i in indices {
        let z = model.logit(&dataset.features[i])?;
        total += bce_from_logit(z, f64::from(dataset.labels[i]));
    }
    Ok(total / indices.len() as f64)
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    fn new(sizes: &[usize], lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            t: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    fn begin_step(&mut self) -> (f64, f64) {
        self.t += 1;
        (1.0 - self.beta1.powi(self.t), 1.0 - self.beta2.powi(self.t))
    }

    fn update(&mut self, slot: usize, params: &mut [f64], grads: &[f64], bc: (f64, f64)) {
        let (m, v) = (&mut self.m[slot], &mut self.v[slot]);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
            let g = g + self.weight_decay * *p;
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc.0;
            let v_hat = *v / bc.1;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Trains `spec` on `dataset` with Adam on binary cross-entropy.
///
/// The split is `config.split()`; metrics are measured on its test part.
/// Identical inputs give bitwise-identical weights and metrics.
pub fn train(
    spec: &NetworkSpec,
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<(TrainedModel, Metrics)> {
    spec.validate()?;
    config.validate()?;
    Error::check_dim(spec.input_dim(), dataset.n_features())?;
    let counts = dataset.class_counts();
    if counts[0] == 0 || counts[1] == 0 {
        return Err(Error::DegenerateData(
            "training requires samples of both classes".into(),
        ));
    }
    let split = config.split(dataset.len());
    let train_counts = split.train.iter().fold([0usize; 2], |mut c, &i| {
        c[usize::from(dataset.labels[i])] += 1;
        c
    });
    if train_counts[0] == 0 || train_counts[1] == 0 {
        return Err(Error::DegenerateData(
            "training split contains a single class".into(),
        ));
    }

    let mut model = TrainedModel::initialize(spec, seed::derive(config.seed, "init"))?;
    model.train_seed = config.seed;
    let train_loss_initial = bce_loss(&model, dataset, &split.train)?;

    let mut slots = Vec::new();
    for layer in &model.layers {
        slots.push(layer.weights.len());
        slots.push(layer.biases.len());
    }
    let mut adam = Adam::new(&slots, config.learning_rate, config.weight_decay);
    let mut grads: Vec<Vec<f64>> = slots.iter().map(|&n| vec![0.0; n]).collect();
    let mut order = split.train.clone();
    let mut rng = seed::rng(seed::derive(config.seed, "shuffle"));

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            for g in grads.iter_mut() {
                g.iter_mut().for_each(|v| *v = 0.0);
            }
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                accumulate_gradients(
                    &model,
                    &dataset.features[i],
                    f64::from(dataset.labels[i]),
                    scale,
                    &mut grads,
                );
            }
            let bc = adam.begin_step();
            for (l, layer) in model.layers.iter_mut().enumerate() {
                adam.update(2 * l, &mut layer.weights, &grads[2 * l], bc);
                adam.update(2 * l + 1, &mut layer.biases, &grads[2 * l + 1], bc);
            }
        }
    }

    let train_loss_final = bce_loss(&model, dataset, &split.train)?;
    let (accuracy, f1) = evaluate(&model, dataset, &split.test)?;
    Ok((
        model,
        Metrics {
            accuracy,
            f1,
            train_loss_initial,
            train_loss_final,
            n_train: split.train.len(),
            n_test: split.test.len(),
        },
    ))
}

/// Adds `scale * dBCE/dparams` for one sample into `grads`
/// (layout: weights then biases per layer).
fn accumulate_gradients(
    model: &TrainedModel,
    x: &[f64],
    y: f64,
    scale: f64,
    grads: &mut [Vec<f64>],
) {
    let fwd = model.forward(x);
    let mut g = vec![(logistic(fwd.logit()) - y) * scale];
    for l in (0..model.layers.len()).rev() {
        let layer = &model.layers[l];
        let a = &fwd.acts[l];
        let (gw, rest) = grads[2 * l..].split_at_mut(1);
        let gw = &mut gw[0];
        let gb = &mut rest[0];
        for (o, &go) in g.iter().enumerate() {
            if go == 0.0 {
                continue;
            }
            gb[o] += go;
            let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
            for (w, &ai) in row.iter_mut().zip(a) {
                *w += go * ai;
            }
        }
        if l > 0 {
            let mut gin = layer.backward(&g);
            for (gi, &z) in gin.iter_mut().zip(&fwd.pre[l - 1]) {
                if z <= 0.0 {
                    *gi = 0.0;
                }
            }
            g = gin;
        }
    }
}

//! Feedforward classifier: rectifier hidden layers, softmax output, weighted
//! cross-entropy, analytic back-propagation and seed-deterministic minibatch
//! training.
//!
//! All arithmetic is `f64`. Features are stored as `f32` in the dataset and
//! widened when a batch is gathered.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::{self, tag};

/// Probabilities below this are clamped before taking the log.
pub const LOG_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Optimizer {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Momentum { momentum: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Divisor of the summed weighted per-sample losses in each batch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanMode {
    /// Nominal batch size, zero-weight samples included.
    #[default]
    Nominal,
    /// Sum of the batch's weights.
    Effective,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpConfig {
    /// Input, hidden..., output widths.
    pub layer_sizes: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    pub mean_mode: MeanMode,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            layer_sizes: vec![64 * 96, 256, 64, 3],
            learning_rate: 0.001,
            batch_size: 256,
            epochs: 200,
            seed: 0,
            optimizer: Optimizer::default(),
            mean_mode: MeanMode::Nominal,
        }
    }
}

impl MlpConfig {
    /// Main classifier default: `input → 256 → 64 → classes`.
    pub fn classifier(input: usize, classes: usize) -> Self {
        NetConfig::classifier().build(input, classes, 0)
    }

    /// Auxiliary label-quality model default: `input → 64 → classes`.
    pub fn auxiliary(input: usize, classes: usize) -> Self {
        NetConfig::auxiliary().build(input, classes, 0)
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_classes(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 || self.layer_sizes.contains(&0) {
            return Err(Error::invalid(format!("bad layer sizes {:?}", self.layer_sizes)));
        }
        if self.n_classes() < 2 {
            return Err(Error::invalid("output layer needs at least two classes"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        Ok(())
    }

    /// Checks the network against a dataset's feature length and class count.
    pub fn check_dataset(&self, ds: &LabeledDataset) -> Result<()> {
        if self.input_dim() != ds.dim() {
            return Err(Error::shape(
                format!("input {}", self.input_dim()),
                format!("input {}", ds.dim()),
            ));
        }
        if self.n_classes() != ds.n_classes() {
            return Err(Error::shape(
                format!("{} classes", self.n_classes()),
                format!("{} classes", ds.n_classes()),
            ));
        }
        Ok(())
    }
}

/// Network hyper-parameters without the dataset-dependent input and output
/// widths; [`NetConfig::build`] fills those in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: Optimizer,
    pub mean_mode: MeanMode,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self::classifier()
    }
}

impl NetConfig {
    /// Main classifier: hidden widths 256 and 64.
    pub fn classifier() -> Self {
        Self {
            hidden: vec![256, 64],
            learning_rate: 0.001,
            batch_size: 256,
            epochs: 200,
            optimizer: Optimizer::default(),
            mean_mode: MeanMode::Nominal,
        }
    }

    /// Auxiliary label-quality model: one hidden layer of 64.
    pub fn auxiliary() -> Self {
        Self {
            hidden: vec![64],
            ..Self::classifier()
        }
    }

    pub fn build(&self, input: usize, classes: usize, seed: u64) -> MlpConfig {
        let mut layer_sizes = vec![input];
        layer_sizes.extend(&self.hidden);
        layer_sizes.push(classes);
        MlpConfig {
            layer_sizes,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed,
            optimizer: self.optimizer,
            mean_mode: self.mean_mode,
        }
    }

    /// Sized for `ds`.
    pub fn for_dataset(&self, ds: &LabeledDataset, seed: u64) -> MlpConfig {
        self.build(ds.dim(), ds.n_classes(), seed)
    }
}

/// One dense layer: `out = in · weights + bias`, weights shaped `(in, out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct Moments {
    first: Vec<Dense>,
    second: Vec<Dense>,
    step: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Dense>,
    moments: Moments,
}

fn zeros_like(layers: &[Dense]) -> Vec<Dense> {
    layers
        .iter()
        .map(|l| Dense {
            weights: Array2::zeros(l.weights.raw_dim()),
            bias: Array1::zeros(l.bias.raw_dim()),
        })
        .collect()
}

impl MlpParams {
    /// Fan-in-scaled uniform weights `U(±1/√fan_in)`, zero biases.
    pub fn init(config: &MlpConfig) -> Result<Self> {
        config.validate()?;
        let mut r = rng::stream(config.seed, &[tag::INIT]);
        let layers = config
            .layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (1.0 / fan_in as f64).sqrt();
                Dense {
                    weights: Array2::from_shape_simple_fn((fan_in, fan_out), || r.random_range(-limit..limit)),
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self::from_layers(layers))
    }

    /// Wraps explicit layers with fresh optimizer state.
    pub fn from_layers(layers: Vec<Dense>) -> Self {
        let moments = Moments {
            first: zeros_like(&layers),
            second: zeros_like(&layers),
            step: 0,
        };
        Self { layers, moments }
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].weights.nrows()];
        sizes.extend(self.layers.iter().map(|l| l.weights.ncols()));
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.layers.last().unwrap().bias.len()
    }

    pub fn optimizer_steps(&self) -> u64 {
        self.moments.step
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }
}

/// Row-stochastic predicted class probabilities, `n × m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbOutput(pub Array2<f64>);

impl ProbOutput {
    pub fn n_samples(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.0.ncols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.0.row(i).to_slice().expect("row-major")
    }

    /// Argmax per row, ties to the lowest class index.
    pub fn argmax(&self) -> Vec<usize> {
        self.0
            .rows()
            .into_iter()
            .map(|r| argmax(r.as_slice().unwrap()))
            .collect()
    }
}

/// Index of the largest value, ties to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in xs.iter().enumerate().skip(1) {
        if v > xs[best] {
            best = j;
        }
    }
    best
}

/// In-place numerically stable softmax over each row.
pub fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|z| (z - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|e| e / sum);
    }
}

/// Activations kept for back-propagation: `inputs[l]` feeds layer `l`.
struct Trace {
    inputs: Vec<Array2<f64>>,
    probs: Array2<f64>,
}

fn forward_trace(params: &MlpParams, x: ArrayView2<f64>) -> Trace {
    let n_layers = params.layers.len();
    let mut inputs = Vec::with_capacity(n_layers);
    let mut h = x.dot(&params.layers[0].weights) + &params.layers[0].bias;
    inputs.push(x.to_owned());
    for layer in &params.layers[1..] {
        h.mapv_inplace(|v| v.max(0.0));
        let next = h.dot(&layer.weights) + &layer.bias;
        inputs.push(h);
        h = next;
    }
    softmax_rows(&mut h);
    Trace { inputs, probs: h }
}

fn check_input(params: &MlpParams, x: &ArrayView2<f64>) -> Result<()> {
    if x.ncols() != params.input_dim() {
        return Err(Error::shape(
            format!("{} features", params.input_dim()),
            format!("{} features", x.ncols()),
        ));
    }
    Ok(())
}

/// Softmax class probabilities for a batch of flattened samples.
pub fn forward(params: &MlpParams, x: ArrayView2<f64>) -> Result<ProbOutput> {
    check_input(params, &x)?;
    let mut h = x.dot(&params.layers[0].weights) + &params.layers[0].bias;
    for layer in &params.layers[1..] {
        h.mapv_inplace(|v| v.max(0.0));
        h = h.dot(&layer.weights) + &layer.bias;
    }
    softmax_rows(&mut h);
    Ok(ProbOutput(h))
}

fn check_targets(n: usize, m: usize, labels: &[usize], weights: &[f64]) -> Result<()> {
    if labels.len() != n || weights.len() != n {
        return Err(Error::shape(
            format!("{n} labels and weights"),
            format!("{} labels, {} weights", labels.len(), weights.len()),
        ));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= m) {
        return Err(Error::invalid(format!("label {y} out of range for {m} classes")));
    }
    Ok(())
}

/// `(1/n) Σ wᵢ · (−ln pᵢ[yᵢ])`, with `pᵢ[yᵢ]` clamped at [`LOG_EPS`].
pub fn weighted_cross_entropy(probs: &ProbOutput, labels: &[usize], weights: &[f64]) -> Result<f64> {
    let n = probs.n_samples();
    check_targets(n, probs.n_classes(), labels, weights)?;
    if n == 0 {
        return Err(Error::invalid("empty batch"));
    }
    Ok(weighted_loss_sum(&probs.0, labels, weights) / n as f64)
}

fn weighted_loss_sum(probs: &Array2<f64>, labels: &[usize], weights: &[f64]) -> f64 {
    let mut clamped = 0usize;
    let total = labels
        .iter()
        .zip(weights)
        .enumerate()
        .map(|(i, (&y, &w))| {
            let p = probs[[i, y]];
            if p < LOG_EPS {
                clamped += 1;
            }
            w * -p.max(LOG_EPS).ln()
        })
        .sum();
    if clamped > 0 {
        log::debug!("clamped {clamped} true-class probabilities at {LOG_EPS}");
    }
    total
}

/// Gradients of the loss with respect to every layer's weights and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn scale(&mut self, c: f64) {
        for l in &mut self.layers {
            l.weights *= c;
            l.bias *= c;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
    }
}

fn backward_trace(params: &MlpParams, trace: &Trace, labels: &[usize], weights: &[f64], divisor: f64) -> Gradients {
    let mut delta = trace.probs.clone();
    for (i, mut row) in delta.rows_mut().into_iter().enumerate() {
        row[labels[i]] -= 1.0;
        let scale = weights[i] / divisor;
        row.mapv_inplace(|v| v * scale);
    }
    let mut grads: Vec<Dense> = Vec::with_capacity(params.layers.len());
    for l in (0..params.layers.len()).rev() {
        let input = &trace.inputs[l];
        let weights = input.t().dot(&delta);
        let bias = delta.sum_axis(Axis(0));
        if l > 0 {
            let mut back = delta.dot(&params.layers[l].weights.t());
            Zip::from(&mut back).and(input).for_each(|d, &a| {
                if a <= 0.0 {
                    *d = 0.0;
                }
            });
            delta = back;
        }
        grads.push(Dense { weights, bias });
    }
    grads.reverse();
    Gradients { layers: grads }
}

/// Analytic gradients of [`weighted_cross_entropy`] (nominal `1/n` mean).
pub fn backward(params: &MlpParams, x: ArrayView2<f64>, labels: &[usize], weights: &[f64]) -> Result<Gradients> {
    check_input(params, &x)?;
    check_targets(x.nrows(), params.n_classes(), labels, weights)?;
    if x.nrows() == 0 {
        return Err(Error::invalid("empty batch"));
    }
    let trace = forward_trace(params, x);
    Ok(backward_trace(params, &trace, labels, weights, x.nrows() as f64))
}

fn apply_update(params: &mut MlpParams, grads: &Gradients, config: &MlpConfig) {
    let lr = config.learning_rate;
    let mo = &mut params.moments;
    mo.step += 1;
    match config.optimizer {
        Optimizer::Adam { beta1, beta2, eps } => {
            let c1 = 1.0 - beta1.powi(mo.step as i32);
            let c2 = 1.0 - beta2.powi(mo.step as i32);
            for (((p, g), m), v) in params
                .layers
                .iter_mut()
                .zip(&grads.layers)
                .zip(&mut mo.first)
                .zip(&mut mo.second)
            {
                let step = |p: &mut f64, &g: &f64, m: &mut f64, v: &mut f64| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= lr * m_hat / (v_hat.sqrt() + eps);
                };
                Zip::from(&mut p.weights)
                    .and(&g.weights)
                    .and(&mut m.weights)
                    .and(&mut v.weights)
                    .for_each(step);
                Zip::from(&mut p.bias)
                    .and(&g.bias)
                    .and(&mut m.bias)
                    .and(&mut v.bias)
                    .for_each(step);
            }
        }
        Optimizer::Momentum { momentum } => {
            for ((p, g), vel) in params.layers.iter_mut().zip(&grads.layers).zip(&mut mo.first) {
                let step = |p: &mut f64, &g: &f64, v: &mut f64| {
                    *v = momentum * *v + g;
                    *p -= lr * *v;
                };
                Zip::from(&mut p.weights)
                    .and(&g.weights)
                    .and(&mut vel.weights)
                    .for_each(step);
                Zip::from(&mut p.bias).and(&g.bias).and(&mut vel.bias).for_each(step);
            }
        }
    }
}

/// Gathers dataset rows into an `f64` batch.
pub fn gather(ds: &LabeledDataset, rows: &[usize]) -> Array2<f64> {
    let mut x = Array2::zeros((rows.len(), ds.dim()));
    for (mut dst, &i) in x.rows_mut().into_iter().zip(rows) {
        for (d, &s) in dst.iter_mut().zip(ds.sample(i)) {
            *d = s as f64;
        }
    }
    x
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean weighted loss over the epoch's samples (nominal denominator).
    pub loss: f64,
    /// Accuracy on the epoch's non-zero-weight samples, measured before each
    /// batch's update.
    pub train_acc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub params: MlpParams,
    pub log: Vec<EpochLog>,
}

impl TrainOutput {
    /// Training log as CSV with header `epoch,loss,train_acc`.
    pub fn log_csv(&self) -> String {
        let mut out = String::from("epoch,loss,train_acc\n");
        for e in &self.log {
            out.push_str(&format!("{},{},{}\n", e.epoch, e.loss, e.train_acc));
        }
        out
    }
}

/// Trains on every sample of `ds`; `weights[i]` scales sample `i`'s loss.
pub fn train(config: &MlpConfig, ds: &LabeledDataset, weights: &[f64]) -> Result<TrainOutput> {
    let rows: Vec<usize> = (0..ds.len()).collect();
    train_rows(config, ds, &rows, weights)
}

/// Trains on `rows` of `ds`; `weights` is aligned with `rows`.
///
/// Each epoch shuffles the row positions with a stream keyed by
/// `(config.seed, epoch)`, so two runs over equally many rows visit them in
/// the same order. Zero-weight samples are dropped from their batch before
/// the forward pass; they would contribute exactly zero to the gradient.
/// A batch with no positive weight performs no update.
pub fn train_rows(config: &MlpConfig, ds: &LabeledDataset, rows: &[usize], weights: &[f64]) -> Result<TrainOutput> {
    config.validate()?;
    config.check_dataset(ds)?;
    if weights.len() != rows.len() {
        return Err(Error::shape(
            format!("{} weights", rows.len()),
            format!("{} weights", weights.len()),
        ));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::invalid(format!(
            "sample weight {w} is not a finite non-negative number"
        )));
    }
    if !weights.iter().any(|&w| w > 0.0) {
        return Err(Error::EmptyEffectiveDataset);
    }

    let mut params = MlpParams::init(config)?;
    let labels = ds.labels();
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut r = rng::stream(config.seed, &[tag::SHUFFLE, epoch as u64]);
        order.shuffle(&mut r);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut seen = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let active: Vec<usize> = chunk.iter().copied().filter(|&p| weights[p] > 0.0).collect();
            if active.is_empty() {
                continue;
            }
            let batch_rows: Vec<usize> = active.iter().map(|&p| rows[p]).collect();
            let batch_labels: Vec<usize> = batch_rows.iter().map(|&i| labels[i]).collect();
            let batch_weights: Vec<f64> = active.iter().map(|&p| weights[p]).collect();
            let x = gather(ds, &batch_rows);
            let trace = forward_trace(&params, x.view());

            let batch_loss = weighted_loss_sum(&trace.probs, &batch_labels, &batch_weights);
            if !batch_loss.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss in epoch {epoch}")));
            }
            loss_sum += batch_loss;
            seen += active.len();
            correct += trace
                .probs
                .rows()
                .into_iter()
                .zip(&batch_labels)
                .filter(|(p, &y)| argmax(p.as_slice().unwrap()) == y)
                .count();

            let divisor = match config.mean_mode {
                MeanMode::Nominal => chunk.len() as f64,
                MeanMode::Effective => batch_weights.iter().sum(),
            };
            let grads = backward_trace(&params, &trace, &batch_labels, &batch_weights, divisor);
            apply_update(&mut params, &grads, config);
        }
        if !params.is_finite() {
            return Err(Error::Numeric(format!("non-finite parameters after epoch {epoch}")));
        }
        log.push(EpochLog {
            epoch,
            loss: loss_sum / rows.len() as f64,
            train_acc: if seen > 0 { correct as f64 / seen as f64 } else { 0.0 },
        });
    }
    Ok(TrainOutput { params, log })
}

/// Predicted labels (argmax, ties to lowest index) and probabilities for
/// `rows` of `ds`.
pub fn predict_rows(params: &MlpParams, ds: &LabeledDataset, rows: &[usize]) -> Result<(Vec<usize>, ProbOutput)> {
    if ds.dim() != params.input_dim() {
        return Err(Error::shape(params.input_dim(), ds.dim()));
    }
    let m = params.n_classes();
    let mut probs = Array2::zeros((rows.len(), m));
    for (c, chunk) in rows.chunks(512).enumerate() {
        let x = gather(ds, chunk);
        let p = forward(params, x.view())?;
        probs.slice_mut(s![c * 512..c * 512 + chunk.len(), ..]).assign(&p.0);
    }
    let probs = ProbOutput(probs);
    Ok((probs.argmax(), probs))
}

pub fn predict(params: &MlpParams, ds: &LabeledDataset) -> Result<(Vec<usize>, ProbOutput)> {
    let rows: Vec<usize> = (0..ds.len()).collect();
    predict_rows(params, ds, &rows)
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"EMONETCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Writes weights and biases: magic, `u32` version, `u32` layer-size count,
/// `u64` sizes, then per layer the row-major `(in, out)` weights followed by
/// the bias, all little-endian `f64`. Optimizer state is not stored.
pub fn save_checkpoint(params: &MlpParams, path: &Path) -> Result<()> {
    let sizes = params.layer_sizes();
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
    for s in &sizes {
        buf.extend_from_slice(&(*s as u64).to_le_bytes());
    }
    for l in &params.layers {
        for v in l.weights.iter().chain(l.bias.iter()) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<MlpParams> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let mut cur = bytes.as_slice();
    let mut take = |n: usize| -> Result<&[u8]> {
        if cur.len() < n {
            return Err(Error::Format("truncated checkpoint".into()));
        }
        let (head, rest) = cur.split_at(n);
        cur = rest;
        Ok(head)
    };
    if take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("checkpoint version {version}")));
    }
    let count = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    if count < 2 {
        return Err(Error::Format("checkpoint needs at least two layer sizes".into()));
    }
    let sizes = (0..count)
        .map(|_| Ok(u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize))
        .collect::<Result<Vec<_>>>()?;
    let mut read_f64s = |n: usize| -> Result<Vec<f64>> {
        Ok(take(n * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    };
    let mut layers = Vec::new();
    for w in sizes.windows(2) {
        let weights =
            Array2::from_shape_vec((w[0], w[1]), read_f64s(w[0] * w[1])?).map_err(|e| Error::Format(e.to_string()))?;
        let bias = Array1::from(read_f64s(w[1])?);
        layers.push(Dense { weights, bias });
    }
    if !cur.is_empty() {
        return Err(Error::Format("trailing bytes in checkpoint".into()));
    }
    Ok(MlpParams::from_layers(layers))
}

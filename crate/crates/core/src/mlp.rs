//! Fully connected feed-forward networks: logistic-sigmoid hidden layers and
//! a softmax output trained with cross-entropy and momentum SGD.
//!
//! Layers are numbered by their position in `layer_sizes`: layer 0 is the
//! input, layers `1..=hidden_count()` are hidden, the last is the output.
//! `weights[l]` maps layer `l` to layer `l + 1` and has shape
//! `layer_sizes[l] × layer_sizes[l + 1]`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::{subsample, Dataset};
use crate::numerics::{Matrix, Rng};
use crate::{Error, Result};

/// Rows evaluated per forward chunk when only predictions are needed.
const EVAL_CHUNK: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    layer_sizes: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
}

impl NetworkParams {
    pub fn new(layer_sizes: Vec<usize>, weights: Vec<Matrix>, biases: Vec<Vec<f64>>) -> Result<Self> {
        let net = Self {
            layer_sizes,
            weights,
            biases,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.layer_sizes;
        if s.len() < 2 || s.contains(&0) {
            return Err(Error::pre(format!("invalid layer sizes {s:?}")));
        }
        if self.weights.len() != s.len() - 1 || self.biases.len() != s.len() - 1 {
            return Err(Error::pre("weights/biases count does not match layer sizes"));
        }
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            if w.shape() != (s[l], s[l + 1]) || b.len() != s[l + 1] {
                return Err(Error::pre(format!(
                    "layer {l}: weights {:?} / bias {} do not fit {} -> {}",
                    w.shape(),
                    b.len(),
                    s[l],
                    s[l + 1]
                )));
            }
            if !w.is_finite() || b.iter().any(|v| !v.is_finite()) {
                return Err(Error::pre(format!("layer {l} has non-finite parameters")));
            }
        }
        Ok(())
    }

    /// All-zero parameters.
    pub fn zeros(layer_sizes: &[usize]) -> Self {
        let weights = layer_sizes
            .windows(2)
            .map(|w| Matrix::zeros(w[0], w[1]))
            .collect();
        let biases = layer_sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
        Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
        }
    }

    /// Weights uniform in `±4·sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes);
        net.validate()?;
        let mut rng = Rng::new(seed);
        for w in net.weights.iter_mut() {
            let r = 4.0 * (6.0 / (w.rows() + w.cols()) as f64).sqrt();
            for v in w.as_mut_slice() {
                *v = (2.0 * rng.uniform() - 1.0) * r;
            }
        }
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn hidden_count(&self) -> usize {
        self.layer_sizes.len() - 2
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.biases
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.iter().map(|w| w.rows() * w.cols()).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    pub(crate) fn check_hidden(&self, layer_index: usize) -> Result<()> {
        if layer_index == 0 || layer_index > self.hidden_count() {
            return Err(Error::pre(format!(
                "layer {layer_index} is not a hidden layer (valid: 1..={})",
                self.hidden_count()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Training stops after the first epoch whose train error is below this.
    pub error_threshold: f64,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            momentum: 0.9,
            batch_size: 100,
            error_threshold: 0.01,
            max_epochs: 200,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::pre("learning_rate must be > 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::pre("momentum must lie in [0, 1)"));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::pre("batch_size and max_epochs must be >= 1"));
        }
        if !(self.error_threshold > 0.0 && self.error_threshold < 1.0) {
            return Err(Error::pre("error_threshold must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Output of a full forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Pre-activations for layers `1..`, each instances × width.
    pub pre: Vec<Matrix>,
    /// Post-sigmoid activations of the hidden layers, in order.
    pub hidden: Vec<Matrix>,
    /// Softmax probabilities, instances × classes.
    pub output: Matrix,
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn affine(x: &Matrix, w: &Matrix, b: &[f64]) -> Matrix {
    let mut z = x.matmul(w);
    for r in 0..z.rows() {
        for (v, bias) in z.row_mut(r).iter_mut().zip(b) {
            *v += bias;
        }
    }
    z
}

fn softmax_rows(z: &mut Matrix) {
    for r in 0..z.rows() {
        let row = z.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

fn check_width(net: &NetworkParams, inputs: &Matrix) -> Result<()> {
    if inputs.cols() != net.layer_sizes[0] {
        return Err(Error::pre(format!(
            "input width {} does not match network input {}",
            inputs.cols(),
            net.layer_sizes[0]
        )));
    }
    Ok(())
}

pub fn forward(net: &NetworkParams, inputs: &Matrix) -> Result<Forward> {
    check_width(net, inputs)?;
    let last = net.weights.len() - 1;
    let mut pre = Vec::with_capacity(net.weights.len());
    let mut hidden = Vec::with_capacity(last);
    let mut current: Option<Matrix> = None;
    for l in 0..=last {
        let x = current.as_ref().unwrap_or(inputs);
        let z = affine(x, &net.weights[l], &net.biases[l]);
        if l < last {
            let mut h = z.clone();
            h.as_mut_slice().iter_mut().for_each(|v| *v = sigmoid(*v));
            pre.push(z);
            hidden.push(h.clone());
            current = Some(h);
        } else {
            let mut p = z.clone();
            softmax_rows(&mut p);
            pre.push(z);
            return Ok(Forward {
                pre,
                hidden,
                output: p,
            });
        }
    }
    unreachable!("network has at least one weight layer")
}

/// Post-sigmoid activations of hidden layer `layer_index` (instances × width).
pub fn hidden_activations(net: &NetworkParams, inputs: &Matrix, layer_index: usize) -> Result<Matrix> {
    net.check_hidden(layer_index)?;
    check_width(net, inputs)?;
    let mut current: Option<Matrix> = None;
    for l in 0..layer_index {
        let mut z = affine(current.as_ref().unwrap_or(inputs), &net.weights[l], &net.biases[l]);
        z.as_mut_slice().iter_mut().for_each(|v| *v = sigmoid(*v));
        current = Some(z);
    }
    Ok(current.expect("layer_index >= 1"))
}

/// Pre-activations entering layer `layer_index + 1` (instances × width):
/// the quantity neuron fusion tries to preserve.
pub fn next_layer_input(net: &NetworkParams, inputs: &Matrix, layer_index: usize) -> Result<Matrix> {
    let h = hidden_activations(net, inputs, layer_index)?;
    Ok(affine(&h, &net.weights[layer_index], &net.biases[layer_index]))
}

/// Argmax class per row; ties resolve to the lowest class index.
pub fn predict(net: &NetworkParams, inputs: &Matrix) -> Result<Vec<usize>> {
    check_width(net, inputs)?;
    let mut out = Vec::with_capacity(inputs.rows());
    for start in (0..inputs.rows()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(inputs.rows());
        let idx: Vec<usize> = (start..end).collect();
        let f = forward(net, &inputs.select_rows(&idx))?;
        out.extend(f.output.row_iter().map(argmax));
    }
    Ok(out)
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of misclassified instances; 0 for an empty dataset.
pub fn classification_error(net: &NetworkParams, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let pred = predict(net, &data.inputs)?;
    let wrong = pred.iter().zip(&data.labels).filter(|(p, l)| p != l).count();
    Ok(wrong as f64 / data.len() as f64)
}

/// Parameter gradients, shaped like [`NetworkParams`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

/// Mean cross-entropy over the batch and its gradient by backpropagation.
pub fn loss_and_gradients(net: &NetworkParams, inputs: &Matrix, labels: &[usize]) -> Result<(f64, Gradients)> {
    if inputs.rows() != labels.len() || labels.is_empty() {
        return Err(Error::pre("batch needs one label per input row"));
    }
    let f = forward(net, inputs)?;
    let b = labels.len() as f64;
    let classes = f.output.cols();
    let mut loss = 0.0;
    let mut delta = f.output.clone();
    for (r, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::pre(format!("label {y} outside {classes} classes")));
        }
        loss -= f.output[(r, y)].max(f64::MIN_POSITIVE).ln();
        delta[(r, y)] -= 1.0;
    }
    loss /= b;
    delta.as_mut_slice().iter_mut().for_each(|v| *v /= b);

    let layers = net.weights.len();
    let mut gw = vec![Matrix::zeros(0, 0); layers];
    let mut gb = vec![Vec::new(); layers];
    for l in (0..layers).rev() {
        let x = if l == 0 { inputs } else { &f.hidden[l - 1] };
        gw[l] = x.t_matmul(&delta);
        gb[l] = column_sums(&delta);
        if l > 0 {
            let mut back = delta.matmul_t(&net.weights[l]);
            let h = &f.hidden[l - 1];
            for (d, &a) in back.as_mut_slice().iter_mut().zip(h.as_slice()) {
                *d *= a * (1.0 - a);
            }
            delta = back;
        }
    }
    Ok((
        loss,
        Gradients {
            weights: gw,
            biases: gb,
        },
    ))
}

fn column_sums(m: &Matrix) -> Vec<f64> {
    let mut s = vec![0.0; m.cols()];
    for r in m.row_iter() {
        for (acc, v) in s.iter_mut().zip(r) {
            *acc += v;
        }
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_error: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: NetworkParams,
    pub log: Vec<EpochRecord>,
    /// Whether training stopped because the error threshold was reached.
    pub converged: bool,
}

/// Mini-batch SGD with momentum on mean cross-entropy.
///
/// Instances are reshuffled each epoch from `cfg.seed`. Stops after the
/// first epoch with train error below `cfg.error_threshold`, or after
/// `cfg.max_epochs`.
pub fn train(net: &NetworkParams, data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with_hook(net, data, cfg, |_, _| Ok(None))
}

/// As [`train`], calling `hook(epoch, &net)` after every epoch. A hook that
/// returns a new network replaces the current one (momentum is reset); this
/// is how pruning is interleaved with training.
pub fn train_with_hook(
    net: &NetworkParams,
    data: &Dataset,
    cfg: &TrainConfig,
    mut hook: impl FnMut(usize, &NetworkParams) -> Result<Option<NetworkParams>>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_width(net, &data.inputs)?;
    if data.is_empty() {
        return Err(Error::pre("cannot train on an empty dataset"));
    }
    if data.class_count > *net.layer_sizes.last().unwrap() {
        return Err(Error::pre("dataset has more classes than network outputs"));
    }
    let mut net = net.clone();
    let mut rng = Rng::new(cfg.seed);
    let mut vel_w: Vec<Matrix> = net.weights.iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect();
    let mut vel_b: Vec<Vec<f64>> = net.biases.iter().map(|b| vec![0.0; b.len()]).collect();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let x = data.inputs.select_rows(chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| data.labels[i]).collect();
            let (loss, g) = loss_and_gradients(&net, &x, &y)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            loss_sum += loss;
            batches += 1;
            for l in 0..net.weights.len() {
                for ((w, v), gr) in net.weights[l]
                    .as_mut_slice()
                    .iter_mut()
                    .zip(vel_w[l].as_mut_slice())
                    .zip(g.weights[l].as_slice())
                {
                    *v = cfg.momentum * *v - cfg.learning_rate * gr;
                    *w += *v;
                }
                for ((b, v), gr) in net.biases[l].iter_mut().zip(vel_b[l].iter_mut()).zip(&g.biases[l]) {
                    *v = cfg.momentum * *v - cfg.learning_rate * gr;
                    *b += *v;
                }
            }
        }
        let mean_loss = loss_sum / batches as f64;
        if net.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Diverged {
                epoch,
                loss: f64::NAN,
            });
        }
        if let Some(replaced) = hook(epoch, &net)? {
            replaced.validate()?;
            net = replaced;
            vel_w = net.weights.iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect();
            vel_b = net.biases.iter().map(|b| vec![0.0; b.len()]).collect();
        }
        let train_error = classification_error(&net, data)?;
        log.push(EpochRecord {
            epoch,
            mean_loss,
            train_error,
        });
        if train_error < cfg.error_threshold {
            return Ok(TrainOutcome {
                net,
                log,
                converged: true,
            });
        }
    }
    Ok(TrainOutcome {
        net,
        log,
        converged: false,
    })
}

/// Instance subsampling applied before activations are extracted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceCap {
    pub count: usize,
    pub seed: u64,
}

/// Activation vectors of one hidden layer: row `i` holds neuron `i`'s
/// post-sigmoid outputs over the instances used.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMatrix {
    pub layer_index: usize,
    /// neurons × instances
    pub values: Matrix,
}

impl ActivationMatrix {
    pub fn neurons(&self) -> usize {
        self.values.rows()
    }

    pub fn instance_count(&self) -> usize {
        self.values.cols()
    }
}

/// Feeds `data` (or a seeded subsample of `cap.count` instances) through the
/// network and collects hidden layer `layer_index`.
pub fn layer_activations(
    net: &NetworkParams,
    data: &Dataset,
    layer_index: usize,
    cap: Option<InstanceCap>,
) -> Result<ActivationMatrix> {
    net.check_hidden(layer_index)?;
    let capped;
    let used = match cap {
        Some(c) if c.count < data.len() => {
            capped = subsample(data, c.count, c.seed)?;
            &capped
        }
        _ => data,
    };
    let h = hidden_activations(net, &used.inputs, layer_index)?;
    Ok(ActivationMatrix {
        layer_index,
        values: h.transpose(),
    })
}

// ---------------------------------------------------------------------------
// Model files

pub const MODEL_MAGIC: &[u8; 8] = b"DIVNETM\0";
pub const MODEL_VERSION: u32 = 1;

/// A network plus the settings that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub net: NetworkParams,
    pub train: Option<TrainConfig>,
    pub init_seed: u64,
}

impl SavedModel {
    pub fn bare(net: NetworkParams) -> Self {
        Self {
            net,
            train: None,
            init_seed: 0,
        }
    }
}

/// Serializes a model. Layout (all integers and floats little endian):
///
/// ```text
/// magic "DIVNETM\0" | version u32 | layer count u32 | sizes u32 × count
/// init_seed u64 | has_train u8 | [lr f64, momentum f64, batch u64,
///   threshold f64, max_epochs u64, seed u64]
/// per weight layer: weights f64 × (fan_in·fan_out) row-major, biases f64 × fan_out
/// ```
pub fn encode_model(model: &SavedModel) -> Vec<u8> {
    let net = &model.net;
    let mut out = Vec::with_capacity(64 + 8 * net.parameter_count());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(net.layer_sizes.len() as u32).to_le_bytes());
    for &s in &net.layer_sizes {
        out.extend_from_slice(&(s as u32).to_le_bytes());
    }
    out.extend_from_slice(&model.init_seed.to_le_bytes());
    match &model.train {
        None => out.push(0),
        Some(t) => {
            out.push(1);
            out.extend_from_slice(&t.learning_rate.to_le_bytes());
            out.extend_from_slice(&t.momentum.to_le_bytes());
            out.extend_from_slice(&(t.batch_size as u64).to_le_bytes());
            out.extend_from_slice(&t.error_threshold.to_le_bytes());
            out.extend_from_slice(&(t.max_epochs as u64).to_le_bytes());
            out.extend_from_slice(&t.seed.to_le_bytes());
        }
    }
    for (w, b) in net.weights.iter().zip(&net.biases) {
        for v in w.as_slice().iter().chain(b) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct LeReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> LeReader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                self.pos as u64,
                format!("truncated model file while reading {what}"),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<SavedModel> {
    let mut r = LeReader { bytes, pos: 0 };
    if r.take(8, "magic")? != MODEL_MAGIC {
        return Err(Error::format(0, "not a divnet model file (bad magic)"));
    }
    let version = r.u32("version")?;
    if version != MODEL_VERSION {
        return Err(Error::format(
            8,
            format!("unsupported model version {version} (expected {MODEL_VERSION})"),
        ));
    }
    let count = r.u32("layer count")? as usize;
    if !(2..=1024).contains(&count) {
        return Err(Error::format(12, format!("implausible layer count {count}")));
    }
    let mut sizes = Vec::with_capacity(count);
    for _ in 0..count {
        let at = r.pos as u64;
        let s = r.u32("layer size")? as usize;
        if s == 0 {
            return Err(Error::format(at, "layer size 0"));
        }
        sizes.push(s);
    }
    let init_seed = r.u64("init seed")?;
    let train = match r.u8("train flag")? {
        0 => None,
        1 => Some(TrainConfig {
            learning_rate: r.f64("learning rate")?,
            momentum: r.f64("momentum")?,
            batch_size: r.u64("batch size")? as usize,
            error_threshold: r.f64("error threshold")?,
            max_epochs: r.u64("max epochs")? as usize,
            seed: r.u64("train seed")?,
        }),
        f => {
            return Err(Error::format(r.pos as u64 - 1, format!("bad train flag {f}")));
        }
    };

    // Reject before allocating if the payload cannot possibly fit.
    let needed: Option<usize> = sizes.windows(2).try_fold(0usize, |acc, w| {
        w[0].checked_mul(w[1])?.checked_add(w[1])?.checked_add(acc)
    });
    match needed.and_then(|n| n.checked_mul(8)) {
        Some(n) if n <= bytes.len() - r.pos => {}
        _ => {
            return Err(Error::format(
                r.pos as u64,
                "truncated model file: parameter payload shorter than layer sizes require",
            ))
        }
    }
    let mut weights = Vec::with_capacity(count - 1);
    let mut biases = Vec::with_capacity(count - 1);
    for w in sizes.windows(2) {
        let mut data = Vec::with_capacity(w[0] * w[1]);
        for _ in 0..w[0] * w[1] {
            data.push(r.f64("weight")?);
        }
        let mut b = Vec::with_capacity(w[1]);
        for _ in 0..w[1] {
            b.push(r.f64("bias")?);
        }
        weights.push(Matrix::from_vec(w[0], w[1], data)?);
        biases.push(b);
    }
    if r.pos != bytes.len() {
        return Err(Error::format(r.pos as u64, "trailing bytes after model payload"));
    }
    let net = NetworkParams {
        layer_sizes: sizes,
        weights,
        biases,
    };
    net.validate().map_err(|e| Error::format(0, e.to_string()))?;
    Ok(SavedModel {
        net,
        train,
        init_seed,
    })
}

pub fn save_model(model: &SavedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SavedModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;

use super::{check_batch, softmax_rows, BlackBoxModel};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::sampling::rng::{derive_seed, stream};

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: vec![100, 100, 100],
            epochs: 200,
            batch_size: 32,
            learning_rate: 1e-3,
            momentum: 0.9,
        }
    }
}

/// Feed-forward ReLU network with a softmax output layer.
///
/// Layer `l` maps activations `a` to `a · W_l + b_l`, with `W_l` stored as
/// `fan_in × fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub config: MlpConfig,
    pub seed: u64,
    /// Mean training loss after each epoch.
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl MlpGradients {
    pub fn flatten(&self) -> Vec<f64> {
        flatten(&self.weights, &self.biases)
    }
}

fn flatten(weights: &[Array2<f64>], biases: &[Array1<f64>]) -> Vec<f64> {
    let mut out = Vec::new();
    for (w, b) in weights.iter().zip(biases) {
        out.extend(w.iter());
        out.extend(b.iter());
    }
    out
}

impl MlpModel {
    /// Randomly initialized network with layer widths `sizes`
    /// (input first, output last). Weights are `U(-1/√fan_in, 1/√fan_in)`,
    /// biases zero.
    pub fn init(sizes: &[usize], config: MlpConfig, seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidInput(format!("invalid layer sizes {sizes:?}")));
        }
        let mut rng = stream(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            weights.push(Array2::from_shape_fn((fan_in, fan_out), |_| {
                rng.random_range(-bound..bound)
            }));
            biases.push(Array1::zeros(fan_out));
        }
        Ok(Self { weights, biases, config, seed, loss_history: Vec::new() })
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.weights[0].nrows()];
        s.extend(self.weights.iter().map(|w| w.ncols()));
        s
    }

    /// Per-layer inputs and the output probabilities for the batch.
    fn forward(&self, x: ArrayView2<f64>) -> (Vec<Array2<f64>>, Array2<f64>) {
        let mut inputs = Vec::with_capacity(self.n_layers());
        let mut a = x.to_owned();
        let last = self.n_layers() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = a.dot(w) + b;
            inputs.push(a);
            a = if l < last { z.mapv(|v| v.max(0.0)) } else { z };
        }
        softmax_rows(&mut a);
        (inputs, a)
    }

    /// Mean cross-entropy over the batch and its gradient.
    pub fn loss_and_grad(&self, x: ArrayView2<f64>, labels: &[usize]) -> (f64, MlpGradients) {
        let n = x.nrows() as f64;
        let (inputs, probs) = self.forward(x);
        let loss = -labels
            .iter()
            .enumerate()
            .map(|(i, &c)| probs[[i, c]].max(1e-300).ln())
            .sum::<f64>()
            / n;

        let mut delta = probs;
        for (i, &c) in labels.iter().enumerate() {
            delta[[i, c]] -= 1.0;
        }
        delta /= n;

        let layers = self.n_layers();
        let mut gw = vec![Array2::zeros((0, 0)); layers];
        let mut gb = vec![Array1::zeros(0); layers];
        for l in (0..layers).rev() {
            gw[l] = inputs[l].t().dot(&delta);
            gb[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut back = delta.dot(&self.weights[l].t());
                // inputs[l] is relu(z_{l-1}); its support is where z > 0
                back.zip_mut_with(&inputs[l], |d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
        }
        (loss, MlpGradients { weights: gw, biases: gb })
    }

    pub fn parameters(&self) -> Vec<f64> {
        flatten(&self.weights, &self.biases)
    }

    pub fn set_parameters(&mut self, flat: &[f64]) {
        let mut it = flat.iter().copied();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            w.iter_mut().for_each(|v| *v = it.next().expect("parameter count"));
            b.iter_mut().for_each(|v| *v = it.next().expect("parameter count"));
        }
    }

    pub fn accuracy(&self, x: ArrayView2<f64>, labels: &[usize]) -> f64 {
        let (_, probs) = self.forward(x);
        let hits = probs
            .outer_iter()
            .zip(labels)
            .filter(|(row, &c)| argmax(row.iter().copied()) == c)
            .count();
        hits as f64 / labels.len().max(1) as f64
    }
}

fn argmax(it: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in it.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

pub fn fit_mlp(
    ds: &Dataset,
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    rng_seed: u64,
) -> Result<MlpModel> {
    let cfg = MlpConfig { epochs, batch_size, learning_rate, ..MlpConfig::default() };
    fit_mlp_with(ds, &cfg, rng_seed)
}

/// Mini-batch gradient descent with momentum on the cross-entropy loss.
pub fn fit_mlp_with(ds: &Dataset, cfg: &MlpConfig, rng_seed: u64) -> Result<MlpModel> {
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::InvalidInput("epochs and batch_size must be >= 1".into()));
    }
    if !(cfg.learning_rate > 0.0) {
        return Err(Error::InvalidInput("learning rate must be positive".into()));
    }
    let mut sizes = vec![ds.n_features()];
    sizes.extend(&cfg.hidden);
    sizes.push(ds.n_classes);
    let mut model = MlpModel::init(&sizes, cfg.clone(), derive_seed(rng_seed, 0))?;
    let mut rng = stream(derive_seed(rng_seed, 1));

    let mut vel_w: Vec<Array2<f64>> = model.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect();
    let mut vel_b: Vec<Array1<f64>> = model.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect();
    let mut order: Vec<usize> = (0..ds.n_rows()).collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let xb = ds.features.select(Axis(0), chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| ds.labels[i]).collect();
            let (loss, grads) = model.loss_and_grad(xb.view(), &yb);
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch, batch, loss });
            }
            epoch_loss += loss * chunk.len() as f64;
            for l in 0..model.n_layers() {
                vel_w[l].zip_mut_with(&grads.weights[l], |v, g| {
                    *v = cfg.momentum * *v - cfg.learning_rate * g
                });
                vel_b[l].zip_mut_with(&grads.biases[l], |v, g| {
                    *v = cfg.momentum * *v - cfg.learning_rate * g
                });
                model.weights[l] += &vel_w[l];
                model.biases[l] += &vel_b[l];
            }
        }
        model.loss_history.push(epoch_loss / ds.n_rows() as f64);
    }
    if model.parameters().iter().any(|v| !v.is_finite()) {
        return Err(Error::TrainingDiverged {
            epoch: cfg.epochs,
            batch: 0,
            loss: f64::NAN,
        });
    }
    Ok(model)
}

impl BlackBoxModel for MlpModel {
    fn name(&self) -> &str {
        "mlp"
    }

    fn n_features(&self) -> usize {
        self.weights[0].nrows()
    }

    fn n_classes(&self) -> usize {
        self.weights.last().map(|w| w.ncols()).unwrap_or(0)
    }

    fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_batch(self.n_features(), x)?;
        Ok(self.forward(x).1)
    }
}

//! Feed-forward regression network: ReLU hidden layers, identity output,
//! mean-squared-error loss, plain minibatch gradient descent.
//!
//! Inputs here are mostly one-hot encodings, so both passes skip zero
//! activations. Skipping is exact: a zero input contributes nothing to a
//! pre-activation or to a weight gradient.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch::EncodingVector;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Default hidden width for every predictor in this crate.
pub const DEFAULT_HIDDEN: usize = 400;

impl AsRef<[f64]> for EncodingVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    in_dim: usize,
    out_dim: usize,
    /// Row-major `(out_dim, in_dim)`.
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Dense {
    fn row(&self, j: usize) -> &[f64] {
        &self.weights[j * self.in_dim..(j + 1) * self.in_dim]
    }

    /// `out = W a + b`, visiting only the nonzero entries of `a`.
    fn apply(&self, a: &[f64], nz: &[usize], out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..self.out_dim).map(|j| {
            let row = self.row(j);
            nz.iter().fold(self.biases[j], |acc, &i| acc + row[i] * a[i])
        }));
    }
}

fn nonzero(a: &[f64], out: &mut Vec<usize>) {
    out.clear();
    out.extend(a.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(i, _)| i));
}

/// A fully connected network with scalar or vector output.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Dense>,
}

/// Gradients with the same layout as a [`Network`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(net: &Network) -> Self {
        Gradients {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: net.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    fn clear(&mut self) {
        self.weights.iter_mut().chain(&mut self.biases).for_each(|v| v.fill(0.0));
    }

    /// Weight gradient of layer `layer`, row-major `(out, in)`.
    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.weights[layer]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        &self.biases[layer]
    }

    /// Same order as [`Network::flat_params`].
    pub fn flatten(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b).copied())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .chain(&self.biases)
            .flatten()
            .fold(0.0, |m, &g| m.max(g.abs()))
    }
}

impl Network {
    /// Glorot-uniform weights (`±sqrt(6 / (fan_in + fan_out))`) and zero biases.
    pub fn new(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build(layer_sizes, |fan_in, fan_out| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            rng.random_range(-limit..=limit)
        })
    }

    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        Self::build(layer_sizes, |_, _| 0.0)
    }

    /// `input -> hidden... -> 1` regressor.
    pub fn regressor(input_dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input_dim);
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Self::new(&sizes, seed)
    }

    fn build(layer_sizes: &[usize], mut init: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config("a network needs at least input and output sizes".into()));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        let layers = layer_sizes
            .windows(2)
            .map(|w| Dense {
                in_dim: w[0],
                out_dim: w[1],
                weights: (0..w[0] * w[1]).map(|_| init(w[0], w[1])).collect(),
                biases: vec![0.0; w[1]],
            })
            .collect();
        Ok(Network { layers })
    }

    /// Assembles a network from explicit row-major weights and biases.
    pub fn from_parts(
        layer_sizes: &[usize],
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes)?;
        if weights.len() != net.layers.len() || biases.len() != net.layers.len() {
            return Err(Error::Dimension {
                expected: net.layers.len(),
                got: weights.len().min(biases.len()),
            });
        }
        for ((layer, w), b) in net.layers.iter_mut().zip(weights).zip(biases) {
            if w.len() != layer.weights.len() {
                return Err(Error::Dimension {
                    expected: layer.weights.len(),
                    got: w.len(),
                });
            }
            if b.len() != layer.biases.len() {
                return Err(Error::Dimension {
                    expected: layer.biases.len(),
                    got: b.len(),
                });
            }
            if w.iter().chain(&b).any(|v| !v.is_finite()) {
                return Err(Error::Config("non-finite parameter".into()));
            }
            layer.weights = w;
            layer.biases = b;
        }
        Ok(net)
    }

    /// A single linear layer `w·x + b`.
    pub fn linear(weights: Vec<f64>, bias: f64) -> Result<Self> {
        let n = weights.len();
        Self::from_parts(&[n, 1], vec![weights], vec![vec![bias]])
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(|l| l.out_dim));
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").out_dim
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Zeroes the output layer so the network predicts exactly 0 everywhere.
    pub fn zero_output_layer(&mut self) {
        let last = self.layers.last_mut().expect("nonempty");
        last.weights.fill(0.0);
        last.biases.fill(0.0);
    }

    pub fn layer_weights(&self, layer: usize) -> &[f64] {
        &self.layers[layer].weights
    }

    pub fn layer_biases(&self, layer: usize) -> &[f64] {
        &self.layers[layer].biases
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// All parameters, layer by layer, weights (row-major) then biases.
    pub fn flat_params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::Dimension {
                expected: self.num_params(),
                got: params.len(),
            });
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.biases.iter_mut()) {
                *w = it.next().expect("length checked");
            }
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Full output vector for one input.
    pub fn forward_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let mut nz = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            nonzero(&cur, &mut nz);
            layer.apply(&cur, &nz, &mut next);
            if i + 1 < self.layers.len() {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Scalar prediction (first output).
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        Ok(self.forward_vec(x)?[0])
    }

    /// Scalar prediction for a 0/1 input given by its hot indices.
    pub fn forward_hot(&self, hot: &[usize]) -> Result<f64> {
        if let Some(&i) = hot.iter().find(|&&i| i >= self.input_dim()) {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: i + 1,
            });
        }
        let first = &self.layers[0];
        let mut cur: Vec<f64> = (0..first.out_dim)
            .map(|j| {
                let row = first.row(j);
                hot.iter().fold(first.biases[j], |acc, &i| acc + row[i])
            })
            .collect();
        let mut next = Vec::new();
        let mut nz = Vec::new();
        for layer in &self.layers[1..] {
            cur.iter_mut().for_each(|v| *v = v.max(0.0));
            nonzero(&cur, &mut nz);
            layer.apply(&cur, &nz, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur[0])
    }

    /// Predictions for many inputs.
    pub fn predict_batch<X: AsRef<[f64]>>(&self, xs: &[X]) -> Result<Vec<f64>> {
        xs.iter().map(|x| self.forward(x.as_ref())).collect()
    }

    fn l2_term(&self, l2: f64) -> f64 {
        if l2 == 0.0 {
            return 0.0;
        }
        l2 * self
            .layers
            .iter()
            .flat_map(|l| &l.weights)
            .map(|w| w * w)
            .sum::<f64>()
    }

    /// Mean squared error plus `l2 · Σ w²` over weights (biases are not penalized).
    pub fn loss<X: AsRef<[f64]>>(&self, batch: &[(X, f64)], l2: f64) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let mut sse = 0.0;
        for (x, y) in batch {
            let e = self.forward(x.as_ref())? - y;
            sse += e * e;
        }
        Ok(sse / batch.len() as f64 + self.l2_term(l2))
    }

    /// Exact gradient of [`Network::loss`].
    pub fn gradient<X: AsRef<[f64]>>(&self, batch: &[(X, f64)], l2: f64) -> Result<Gradients> {
        let mut grads = Gradients::zeros_like(self);
        let mut work = Workspace::default();
        self.accumulate_gradient(batch.iter().map(|(x, y)| (x.as_ref(), *y)), batch.len(), l2, &mut grads, &mut work)?;
        Ok(grads)
    }

    fn accumulate_gradient<'a>(
        &self,
        batch: impl Iterator<Item = (&'a [f64], f64)>,
        n: usize,
        l2: f64,
        grads: &mut Gradients,
        work: &mut Workspace,
    ) -> Result<()> {
        if n == 0 {
            return Err(Error::Empty("batch"));
        }
        if self.output_dim() != 1 {
            return Err(Error::Config("gradient requires a scalar-output network".into()));
        }
        grads.clear();
        let scale = 2.0 / n as f64;
        let depth = self.layers.len();
        work.acts.resize_with(depth + 1, Vec::new);
        work.nz.resize_with(depth, Vec::new);
        for (x, y) in batch {
            self.check_input(x)?;
            work.acts[0].clear();
            work.acts[0].extend_from_slice(x);
            for l in 0..depth {
                let (lo, hi) = work.acts.split_at_mut(l + 1);
                nonzero(&lo[l], &mut work.nz[l]);
                self.layers[l].apply(&lo[l], &work.nz[l], &mut hi[0]);
                if l + 1 < depth {
                    hi[0].iter_mut().for_each(|v| *v = v.max(0.0));
                }
            }
            work.delta.clear();
            work.delta.push(scale * (work.acts[depth][0] - y));
            for l in (0..depth).rev() {
                let layer = &self.layers[l];
                let a = &work.acts[l];
                let nz = &work.nz[l];
                let gw = &mut grads.weights[l];
                for (j, &d) in work.delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    grads.biases[l][j] += d;
                    let row = &mut gw[j * layer.in_dim..(j + 1) * layer.in_dim];
                    for &i in nz {
                        row[i] += d * a[i];
                    }
                }
                if l > 0 {
                    // Backpropagate through W, then through ReLU of layer l-1's output.
                    work.prev.clear();
                    work.prev.resize(layer.in_dim, 0.0);
                    for (j, &d) in work.delta.iter().enumerate() {
                        if d == 0.0 {
                            continue;
                        }
                        let row = layer.row(j);
                        for &i in nz {
                            work.prev[i] += row[i] * d;
                        }
                    }
                    // ReLU' is 0 where the activation is 0; nz already excludes those.
                    std::mem::swap(&mut work.delta, &mut work.prev);
                }
            }
        }
        if l2 != 0.0 {
            for (gw, layer) in grads.weights.iter_mut().zip(&self.layers) {
                for (g, w) in gw.iter_mut().zip(&layer.weights) {
                    *g += 2.0 * l2 * w;
                }
            }
        }
        Ok(())
    }

    fn apply_step(&mut self, grads: &Gradients, lr: f64) {
        for (l, layer) in self.layers.iter_mut().enumerate() {
            for (w, g) in layer.weights.iter_mut().zip(&grads.weights[l]) {
                *w -= lr * g;
            }
            for (b, g) in layer.biases.iter_mut().zip(&grads.biases[l]) {
                *b -= lr * g;
            }
        }
    }

    pub fn to_checkpoint(&self) -> NetworkCheckpoint {
        NetworkCheckpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            layer_sizes: self.layer_sizes(),
            weights: self.layers.iter().map(|l| l.weights.clone()).collect(),
            biases: self.layers.iter().map(|l| l.biases.clone()).collect(),
        }
    }

    pub fn from_checkpoint(ck: NetworkCheckpoint) -> Result<Self> {
        if ck.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint format version {}",
                ck.format_version
            )));
        }
        Self::from_parts(&ck.layer_sizes, ck.weights, ck.biases)
    }
}

#[derive(Default)]
struct Workspace {
    acts: Vec<Vec<f64>>,
    nz: Vec<Vec<usize>>,
    delta: Vec<f64>,
    prev: Vec<f64>,
}

/// On-disk network format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCheckpoint {
    pub format_version: u32,
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Serialize for Network {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_checkpoint().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Network {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let ck = NetworkCheckpoint::deserialize(d)?;
        Network::from_checkpoint(ck).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub rng_seed: u64,
    pub l2_penalty: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            epochs: 100,
            batch_size: 32,
            rng_seed: 0,
            l2_penalty: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.l2_penalty.is_finite() && self.l2_penalty >= 0.0) {
            return Err(Error::Config("l2_penalty must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Minibatch gradient descent. Each epoch reshuffles with a generator seeded
/// from `cfg.rng_seed`; the trace holds the full-data objective after each epoch.
pub fn train<X: AsRef<[f64]>>(
    net: &Network,
    data: &[(X, f64)],
    cfg: &TrainConfig,
) -> Result<(Network, Vec<f64>)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training data"));
    }
    for (x, _) in data {
        net.check_input(x.as_ref())?;
    }
    let mut net = net.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grads = Gradients::zeros_like(&net);
    let mut work = Workspace::default();
    let full_batch = cfg.batch_size >= data.len();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        if !full_batch {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(cfg.batch_size) {
            let batch = chunk.iter().map(|&i| (data[i].0.as_ref(), data[i].1));
            net.accumulate_gradient(batch, chunk.len(), cfg.l2_penalty, &mut grads, &mut work)?;
            net.apply_step(&grads, cfg.learning_rate);
        }
        trace.push(net.loss(data, cfg.l2_penalty)?);
    }
    Ok((net, trace))
}

pub fn rmse<X: AsRef<[f64]>>(net: &Network, data: &[(X, f64)]) -> Result<f64> {
    Ok(net.loss(data, 0.0)?.sqrt())
}

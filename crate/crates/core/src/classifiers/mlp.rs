//! Fully connected network: ReLU hidden layers, softmax output, mean
//! cross-entropy loss, mini-batch training.
//!
//! Parameters live in one flat vector, layer by layer, each layer stored as
//! its `out x in` weight block followed by its `out` biases. Batch gradients
//! are accumulated over fixed-size chunks that are summed in chunk order, so
//! training is bit-reproducible at any thread count.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;

const CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: Optimizer,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: vec![100],
            learning_rate: 0.001,
            batch_size: 256,
            epochs: 50,
            optimizer: Optimizer::Adam,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) {
            return Err(Error::InvalidConfig("hidden layers need at least one unit".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("mlp learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("mlp batch size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    /// Layer widths, input first and class count last.
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct LayerSpan {
    inputs: usize,
    outputs: usize,
    weights: usize,
    biases: usize,
}

fn spans(sizes: &[usize]) -> Vec<LayerSpan> {
    let mut off = 0;
    sizes
        .windows(2)
        .map(|w| {
            let s = LayerSpan {
                inputs: w[0],
                outputs: w[1],
                weights: off,
                biases: off + w[0] * w[1],
            };
            off += w[0] * w[1] + w[1];
            s
        })
        .collect()
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

impl Mlp {
    /// Weights and biases drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init(sizes: Vec<usize>, seed: u64) -> Self {
        let mut rng = rng::stream(seed, &[rng::tag("mlp-init")]);
        let mut params = Vec::new();
        for s in spans(&sizes) {
            let bound = 1.0 / (s.inputs as f64).sqrt();
            params.extend((0..s.inputs * s.outputs + s.outputs).map(|_| rng.gen_range(-bound..=bound)));
        }
        Self { sizes, params }
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Runs the network; `acts[0]` is the input, `acts[l]` the post-ReLU
    /// activations of hidden layer `l`, and the last entry the output logits.
    fn forward(&self, x: &[f64], acts: &mut Vec<Vec<f64>>) {
        let layers = spans(&self.sizes);
        acts.resize(layers.len() + 1, Vec::new());
        acts[0].clear();
        acts[0].extend_from_slice(x);
        for (l, s) in layers.iter().enumerate() {
            let (prev, rest) = acts.split_at_mut(l + 1);
            let input = &prev[l];
            let out = &mut rest[0];
            out.clear();
            let w = &self.params[s.weights..s.biases];
            let b = &self.params[s.biases..s.biases + s.outputs];
            for o in 0..s.outputs {
                let row = &w[o * s.inputs..(o + 1) * s.inputs];
                let z = b[o] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
                out.push(if l + 1 < layers.len() { z.max(0.0) } else { z });
            }
        }
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        let mut acts = Vec::new();
        self.forward(x, &mut acts);
        let mut p = acts.pop().unwrap_or_default();
        softmax_in_place(&mut p);
        p
    }

    /// Summed loss and gradient over `rows`.
    fn chunk_loss_grad(&self, x: &Matrix, y: &[usize], rows: &[usize]) -> (f64, Vec<f64>) {
        let layers = spans(&self.sizes);
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let mut acts = Vec::new();
        let mut delta = Vec::new();
        let mut prev_delta = Vec::new();
        for &r in rows {
            self.forward(x.row(r), &mut acts);
            let logits = acts.last().expect("output layer");
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
            loss += lse - logits[y[r]];

            delta.clear();
            delta.extend(logits.iter().map(|z| (z - lse).exp()));
            delta[y[r]] -= 1.0;

            for (l, s) in layers.iter().enumerate().rev() {
                let input = &acts[l];
                for o in 0..s.outputs {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    let gw = &mut grad[s.weights + o * s.inputs..s.weights + (o + 1) * s.inputs];
                    for (g, a) in gw.iter_mut().zip(input) {
                        *g += d * a;
                    }
                    grad[s.biases + o] += d;
                }
                if l == 0 {
                    break;
                }
                prev_delta.clear();
                prev_delta.resize(s.inputs, 0.0);
                let w = &self.params[s.weights..s.biases];
                for o in 0..s.outputs {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    for (pd, wv) in prev_delta.iter_mut().zip(&w[o * s.inputs..(o + 1) * s.inputs]) {
                        *pd += d * wv;
                    }
                }
                // ReLU derivative from the post-activation value.
                for (pd, a) in prev_delta.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *pd = 0.0;
                    }
                }
                std::mem::swap(&mut delta, &mut prev_delta);
            }
        }
        (loss, grad)
    }

    /// Mean cross-entropy over `rows` and its gradient with respect to
    /// [`params`](Self::params).
    pub fn loss_and_grad(&self, x: &Matrix, y: &[usize], rows: &[usize]) -> (f64, Vec<f64>) {
        let parts: Vec<(f64, Vec<f64>)> = rows
            .par_chunks(CHUNK)
            .map(|c| self.chunk_loss_grad(x, y, c))
            .collect();
        let mut loss = 0.0;
        let mut grad = vec![0.0; self.params.len()];
        for (l, g) in parts {
            loss += l;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        let n = rows.len().max(1) as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        (loss / n, grad)
    }

    pub fn fit(x: &Matrix, y: &[usize], n_classes: usize, config: &MlpConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut sizes = vec![x.n_cols()];
        sizes.extend(&config.hidden);
        sizes.push(n_classes);
        let mut net = Self::init(sizes, seed);

        let mut rng = rng::stream(seed, &[rng::tag("mlp-shuffle")]);
        let mut order: Vec<usize> = (0..x.n_rows()).collect();
        let (beta1, beta2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
        let mut m = vec![0.0; net.params.len()];
        let mut v = vec![0.0; net.params.len()];
        let mut step = 0i32;

        for _ in 0..config.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(config.batch_size) {
                let (_, grad) = net.loss_and_grad(x, y, batch);
                match config.optimizer {
                    Optimizer::Sgd => {
                        for (p, g) in net.params.iter_mut().zip(&grad) {
                            *p -= config.learning_rate * g;
                        }
                    }
                    Optimizer::Adam => {
                        step += 1;
                        let c1 = 1.0 - beta1.powi(step);
                        let c2 = 1.0 - beta2.powi(step);
                        for i in 0..grad.len() {
                            m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
                            v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
                            let mh = m[i] / c1;
                            let vh = v[i] / c2;
                            net.params[i] -= config.learning_rate * mh / (vh.sqrt() + eps);
                        }
                    }
                }
            }
        }
        Ok(net)
    }
}

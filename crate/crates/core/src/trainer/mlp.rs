//! Fully connected network with manual backpropagation.
//!
//! Parameters live in one flat vector, layer by layer: the weight matrix
//! (row-major, `out × in`) followed by the bias vector.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::task::Dataset;
use crate::error::{InertiaError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    #[default]
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

/// Mean softmax cross-entropy of one logit vector, and its gradient.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() + max - logits[label];
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    (loss, grad)
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new(layer_sizes: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(InertiaError::Config(format!("invalid layer sizes {layer_sizes:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(Mlp { layer_sizes: layer_sizes.to_vec(), activation, params })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(InertiaError::domain(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.params = params;
        Ok(())
    }

    /// `θ ← θ − lr·g`.
    pub fn sgd_step(&mut self, grad: &[f64], lr: f64) {
        for (p, g) in self.params.iter_mut().zip(grad) {
            *p -= lr * g;
        }
    }

    /// Index ranges of each layer's weights and biases.
    pub fn layer_ranges(&self) -> Vec<(std::ops::Range<usize>, std::ops::Range<usize>)> {
        let mut off = 0;
        self.layer_sizes
            .windows(2)
            .map(|p| {
                let w = off..off + p[0] * p[1];
                let b = w.end..w.end + p[1];
                off = b.end;
                (w, b)
            })
            .collect()
    }

    /// Activations per layer for one input, logits last.
    fn forward_with(&self, params: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
        let n_layers = self.layer_sizes.len() - 1;
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(x.to_vec());
        let mut off = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let w = &params[off..off + n_in * n_out];
            let b = &params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let input = &acts[l];
            let out: Vec<f64> = (0..n_out)
                .map(|j| {
                    let z = b[j] + w[j * n_in..(j + 1) * n_in].iter().zip(input).map(|(a, c)| a * c).sum::<f64>();
                    if l + 1 < n_layers {
                        self.activation.apply(z)
                    } else {
                        z
                    }
                })
                .collect();
            acts.push(out);
        }
        acts
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.forward_with(&self.params, x).pop().unwrap_or_default()
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let z = self.logits(x);
        (0..z.len()).fold(0, |best, i| if z[i] > z[best] { i } else { best })
    }

    /// Mean cross-entropy and its gradient at arbitrary parameters.
    pub fn loss_grad_at(&self, params: &[f64], data: &Dataset, idx: &[usize]) -> (f64, Vec<f64>) {
        let n_layers = self.layer_sizes.len() - 1;
        let ranges = self.layer_ranges();
        let mut grad = vec![0.0; params.len()];
        let mut total = 0.0;
        let scale = 1.0 / idx.len().max(1) as f64;
        for &i in idx {
            let acts = self.forward_with(params, data.input(i));
            let (loss, mut delta) = softmax_cross_entropy(&acts[n_layers], data.labels[i]);
            total += loss;
            for d in delta.iter_mut() {
                *d *= scale;
            }
            for l in (0..n_layers).rev() {
                let n_in = self.layer_sizes[l];
                let (wr, br) = &ranges[l];
                let input = &acts[l];
                for (j, &dj) in delta.iter().enumerate() {
                    grad[br.start + j] += dj;
                    let row = &mut grad[wr.start + j * n_in..wr.start + (j + 1) * n_in];
                    for (g, a) in row.iter_mut().zip(input) {
                        *g += dj * a;
                    }
                }
                if l > 0 {
                    let w = &params[wr.clone()];
                    delta = (0..n_in)
                        .map(|k| {
                            let back: f64 = delta.iter().enumerate().map(|(j, dj)| dj * w[j * n_in + k]).sum();
                            back * self.activation.derivative(input[k])
                        })
                        .collect();
                }
            }
        }
        (total * scale, grad)
    }

    pub fn loss_grad(&self, data: &Dataset, idx: &[usize]) -> (f64, Vec<f64>) {
        self.loss_grad_at(&self.params, data, idx)
    }

    pub fn loss_at(&self, params: &[f64], data: &Dataset, idx: &[usize]) -> f64 {
        let n_layers = self.layer_sizes.len() - 1;
        let total: f64 = idx
            .iter()
            .map(|&i| softmax_cross_entropy(&self.forward_with(params, data.input(i))[n_layers], data.labels[i]).0)
            .sum();
        total / idx.len().max(1) as f64
    }

    /// Mean loss over a whole dataset.
    pub fn loss(&self, data: &Dataset) -> f64 {
        let idx: Vec<usize> = (0..data.len()).collect();
        self.loss_at(&self.params, data, &idx)
    }

    pub fn accuracy(&self, data: &Dataset) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let hits = (0..data.len()).filter(|&i| self.predict(data.input(i)) == data.labels[i]).count();
        hits as f64 / data.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub checked: usize,
    pub max_relative_error: f64,
}

/// Compares analytic gradients against central differences on
/// `per_layer` randomly chosen parameters of every layer.
///
/// The relative error is `|a − n| / max(|a|, |n|, scale_floor)`.
pub fn gradient_check(model: &Mlp, data: &Dataset, idx: &[usize], per_layer: usize, seed: u64) -> GradientCheck {
    const H: f64 = 1e-5;
    const SCALE_FLOOR: f64 = 1e-6;
    let (_, analytic) = model.loss_grad(data, idx);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = model.params().to_vec();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (w, b) in model.layer_ranges() {
        for _ in 0..per_layer {
            let p = rng.random_range(w.start..b.end);
            let orig = params[p];
            params[p] = orig + H;
            let up = model.loss_at(&params, data, idx);
            params[p] = orig - H;
            let down = model.loss_at(&params, data, idx);
            params[p] = orig;
            let numeric = (up - down) / (2.0 * H);
            let a = analytic[p];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(SCALE_FLOOR);
            worst = worst.max(err);
            checked += 1;
        }
    }
    GradientCheck { checked, max_relative_error: worst }
}

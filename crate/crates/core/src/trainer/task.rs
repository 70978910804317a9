//! Gaussian-cluster classification data with label noise and class splits.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{InertiaError, Result};
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub dim: usize,
    /// Row-major `len × dim`.
    pub inputs: Vec<f64>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn with_labels(&self, labels: Vec<usize>) -> Dataset {
        Dataset { dim: self.dim, inputs: self.inputs.clone(), labels }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticTask {
    pub n_classes: usize,
    pub input_dim: usize,
    pub cluster_std: f64,
    pub noise_fraction: f64,
    /// Restricts sampling to these classes; labels keep their global ids.
    pub class_subset: Option<Vec<usize>>,
    /// Seeds the cluster means. Tasks sharing a seed share geometry.
    pub seed: u64,
}

impl Default for SyntheticTask {
    fn default() -> Self {
        SyntheticTask {
            n_classes: 10,
            input_dim: 16,
            cluster_std: 1.0,
            noise_fraction: 0.0,
            class_subset: None,
            seed: 0,
        }
    }
}

impl SyntheticTask {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(InertiaError::Config(m));
        if self.n_classes < 2 || self.input_dim == 0 {
            return bad("need at least 2 classes and 1 input dimension".into());
        }
        if !(self.cluster_std.is_finite() && self.cluster_std > 0.0) {
            return bad("cluster_std must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.noise_fraction) {
            return bad("noise_fraction must lie in [0, 1]".into());
        }
        if let Some(subset) = &self.class_subset {
            if subset.is_empty() {
                return bad("class_subset must be nonempty".into());
            }
            if let Some(c) = subset.iter().find(|&&c| c >= self.n_classes) {
                return bad(format!("class {c} outside 0..{}", self.n_classes));
            }
        }
        Ok(())
    }

    pub fn classes(&self) -> Vec<usize> {
        self.class_subset.clone().unwrap_or_else(|| (0..self.n_classes).collect())
    }

    /// Class centers drawn from a standard normal per coordinate.
    pub fn cluster_means(&self) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, 0));
        (0..self.n_classes)
            .map(|_| (0..self.input_dim).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect()
    }

    /// Draws `n` points, balanced over the task's classes in shuffled
    /// order, then applies the task's label noise. `stream` selects an
    /// independent draw.
    pub fn generate(&self, n: usize, stream: u64) -> Dataset {
        let means = self.cluster_means();
        let classes = self.classes();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, 1 + 2 * stream));
        let mut labels: Vec<usize> = (0..n).map(|i| classes[i % classes.len()]).collect();
        labels.shuffle(&mut rng);
        let mut inputs = Vec::with_capacity(n * self.input_dim);
        for &c in &labels {
            for mu in &means[c] {
                let z: f64 = StandardNormal.sample(&mut rng);
                inputs.push(mu + self.cluster_std * z);
            }
        }
        let clean = Dataset { dim: self.input_dim, inputs, labels };
        if self.noise_fraction > 0.0 {
            self.relabel(&clean, self.noise_fraction, derive_seed(self.seed, 2 + 2 * stream))
        } else {
            clean
        }
    }

    /// Resamples the labels of exactly `round(fraction·n)` points uniformly
    /// over the task's classes. A resampled label may coincide with the
    /// original.
    pub fn relabel(&self, data: &Dataset, fraction: f64, seed: u64) -> Dataset {
        let classes = self.classes();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);
        let k = (fraction.clamp(0.0, 1.0) * data.len() as f64).round() as usize;
        let mut labels = data.labels.clone();
        for &i in &order[..k] {
            labels[i] = classes[rng.random_range(0..classes.len())];
        }
        data.with_labels(labels)
    }
}

//! Squashed linear models shared by the affinity and confidence heads.
//!
//! Features are standardised with statistics frozen at fit time, then
//! `sigmoid(w . x + b)`. Fitting is full-batch gradient descent with
//! heavy-ball momentum and no randomness beyond the caller's data order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquashedLinear {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
}

impl SquashedLinear {
    /// All-zero weights and bias: predicts 0.5 everywhere.
    pub fn zeros(dim: usize) -> Self {
        SquashedLinear {
            weights: vec![0.0; dim],
            bias: 0.0,
            feature_mean: vec![0.0; dim],
            feature_scale: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.weights.len();
        if self.feature_mean.len() != d || self.feature_scale.len() != d {
            return Err(Error::TrainingData("model vector lengths disagree".into()));
        }
        let finite = self
            .weights
            .iter()
            .chain(&self.feature_mean)
            .chain(&self.feature_scale)
            .chain(std::iter::once(&self.bias))
            .all(|v| v.is_finite());
        if !finite || self.feature_scale.iter().any(|s| *s <= 0.0) {
            return Err(Error::TrainingData("model parameters must be finite with positive scales".into()));
        }
        Ok(())
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        let mut z = self.bias;
        for (((w, xi), m), s) in self.weights.iter().zip(x).zip(&self.feature_mean).zip(&self.feature_scale) {
            z += w * (xi - m) / s;
        }
        z
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub learning_rate: f64,
    pub epochs: usize,
    pub momentum: f64,
    pub l2: f64,
    /// Multiplies the loss gradient (the confidence loss weight in the joint objective).
    pub loss_weight: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            learning_rate: 0.5,
            epochs: 2000,
            momentum: 0.9,
            l2: 1e-4,
            loss_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    /// Binary cross-entropy on {0, 1} targets.
    CrossEntropy,
    /// Squared error on targets in [0, 1].
    SquaredError,
}

fn standardisation(xs: &[Vec<f64>], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = xs.len() as f64;
    let mut mean = vec![0.0; dim];
    for x in xs {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for x in xs {
        for i in 0..dim {
            var[i] += (x[i] - mean[i]).powi(2);
        }
    }
    let scale = var
        .iter()
        .map(|v| {
            let s = (v / n).sqrt();
            if s > 1e-12 {
                s
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

/// Fits `sigmoid(w . x + b)` to `targets`.
pub fn fit(xs: &[Vec<f64>], targets: &[f64], loss: Loss, opts: &FitOptions) -> Result<SquashedLinear> {
    if xs.is_empty() {
        return Err(Error::TrainingData("no examples".into()));
    }
    if xs.len() != targets.len() {
        return Err(Error::TrainingData("feature/target count mismatch".into()));
    }
    let dim = xs[0].len();
    if xs.iter().any(|x| x.len() != dim || x.iter().any(|v| !v.is_finite())) {
        return Err(Error::TrainingData("features must be finite with a common length".into()));
    }
    if targets.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::TrainingData("targets must lie in [0, 1]".into()));
    }

    let (feature_mean, feature_scale) = standardisation(xs, dim);
    let z: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| (0..dim).map(|i| (x[i] - feature_mean[i]) / feature_scale[i]).collect())
        .collect();
    let n = xs.len() as f64;

    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut vw = vec![0.0; dim];
    let mut vb = 0.0;
    let mut gw = vec![0.0; dim];
    for _ in 0..opts.epochs {
        gw.iter_mut().for_each(|g| *g = 0.0);
        let mut gb = 0.0;
        for (x, &t) in z.iter().zip(targets) {
            let logit = b + w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>();
            let p = sigmoid(logit);
            let dlogit = match loss {
                Loss::CrossEntropy => p - t,
                Loss::SquaredError => 2.0 * (p - t) * p * (1.0 - p),
            };
            for i in 0..dim {
                gw[i] += dlogit * x[i];
            }
            gb += dlogit;
        }
        for i in 0..dim {
            let g = opts.loss_weight * gw[i] / n + opts.l2 * w[i];
            vw[i] = opts.momentum * vw[i] - opts.learning_rate * g;
            w[i] += vw[i];
        }
        vb = opts.momentum * vb - opts.learning_rate * opts.loss_weight * gb / n;
        b += vb;
    }
    let model = SquashedLinear {
        weights: w,
        bias: b,
        feature_mean,
        feature_scale,
    };
    model.validate()?;
    Ok(model)
}

pub fn mean_squared_error(model: &SquashedLinear, xs: &[Vec<f64>], targets: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter()
        .zip(targets)
        .map(|(x, t)| (model.predict(x) - t).powi(2))
        .sum::<f64>()
        / xs.len() as f64
}

pub fn accuracy(model: &SquashedLinear, xs: &[Vec<f64>], labels: &[bool]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let correct = xs
        .iter()
        .zip(labels)
        .filter(|(x, l)| (model.predict(x) >= 0.5) == **l)
        .count();
    correct as f64 / xs.len() as f64
}

/// Deterministic train/holdout split: a seeded Fisher-Yates shuffle of the
/// indices, with the last `holdout_fraction` held out.
pub fn split_indices(n: usize, holdout_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let n_hold = if n >= 5 {
        ((n as f64) * holdout_fraction).round() as usize
    } else {
        0
    };
    let hold = idx.split_off(n - n_hold);
    (idx, hold)
}

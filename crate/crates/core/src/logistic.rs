//! Deterministic L2-regularized logistic regression.
//!
//! Shared by the region-proposal patch classifier (65,536 inputs) and the
//! per-feature weak classifiers (324 / 27 inputs). Features are standardized
//! internally; the returned model folds the standardization into its weights
//! so prediction is a single dot product.
//!
//! Training is plain gradient descent with momentum and a multiplicative
//! step-size adaption (grow on improvement, halve on regression). Every sum
//! runs over fixed chunk boundaries in a fixed order, so results are
//! bit-reproducible regardless of thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Row-major dense feature matrix.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    dim: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(dim: usize) -> Self {
        FeatureMatrix { dim, data: Vec::new() }
    }

    pub fn with_capacity(dim: usize, rows: usize) -> Self {
        FeatureMatrix { dim, data: Vec::with_capacity(dim * rows) }
    }

    pub fn push_row(&mut self, row: &[f32]) {
        assert_eq!(row.len(), self.dim);
        self.data.extend_from_slice(row);
    }

    pub fn rows(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Trained logistic model over raw (unstandardized) features.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub weights: Vec<f32>,
    pub bias: f32,
}

impl LogisticModel {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn score(&self, features: &[f32]) -> f64 {
        debug_assert_eq!(features.len(), self.weights.len());
        dot(&self.weights, features) as f64 + self.bias as f64
    }

    /// Sigmoid of the affine score; always in (0, 1).
    pub fn proba(&self, features: &[f32]) -> f64 {
        sigmoid(self.score(features))
    }

    pub fn accuracy(&self, x: &FeatureMatrix, y: &[bool]) -> f64 {
        let correct = (0..x.rows())
            .filter(|&i| (self.proba(x.row(i)) >= 0.5) == y[i])
            .count();
        correct as f64 / x.rows() as f64
    }

    /// Mean of per-class accuracies; insensitive to class imbalance.
    pub fn balanced_accuracy(&self, x: &FeatureMatrix, y: &[bool]) -> f64 {
        let mut hit = [0usize; 2];
        let mut total = [0usize; 2];
        for i in 0..x.rows() {
            let class = y[i] as usize;
            total[class] += 1;
            if (self.proba(x.row(i)) >= 0.5) == y[i] {
                hit[class] += 1;
            }
        }
        let rate = |c: usize| {
            if total[c] == 0 {
                1.0
            } else {
                hit[c] as f64 / total[c] as f64
            }
        };
        (rate(0) + rate(1)) / 2.0
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrainOptions {
    pub l2: f64,
    pub iters: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { l2: 0.1, iters: 200 }
    }
}

/// Fits a logistic model; requires both classes to be present.
pub fn train_logistic(x: &FeatureMatrix, y: &[bool], opts: TrainOptions) -> Result<LogisticModel> {
    let n = x.rows();
    if n == 0 || n != y.len() {
        return Err(Error::Training(format!("bad training shape: {n} rows, {} labels", y.len())));
    }
    let positives = y.iter().filter(|&&v| v).count();
    if positives == 0 || positives == n {
        return Err(Error::Training("training data contains a single class".into()));
    }
    let d = x.dim();

    // Column standardization, done once into a working copy.
    let (mean, scale) = column_stats(x);
    let mut std_data = x.data.clone();
    for row in std_data.chunks_mut(d) {
        for j in 0..d {
            row[j] = (row[j] - mean[j]) * scale[j];
        }
    }
    let xs = FeatureMatrix { dim: d, data: std_data };

    // Stable initial step from a curvature bound for the logistic loss.
    let mean_norm_sq: f64 = (0..n).map(|i| norm_sq(xs.row(i))).sum::<f64>() / n as f64;
    let mut lr = 1.0 / (0.25 * (mean_norm_sq + 1.0) + opts.l2).max(1e-12);
    let momentum = 0.9;

    let mut w = vec![0f32; d];
    let mut b = 0f32;
    let mut vel = vec![0f32; d];
    let mut vel_b = 0f32;
    let mut prev_loss = f64::INFINITY;

    let mut scores = vec![0f64; n];
    let mut errors = vec![0f32; n];
    for _ in 0..opts.iters {
        compute_scores(&xs, &w, b, &mut scores);
        let mut loss = 0.0;
        for i in 0..n {
            let z = scores[i];
            let target = y[i] as u8 as f64;
            // log(1 + e^-|z|) + max(z,0) - z*y, numerically stable.
            loss += (-z.abs()).exp().ln_1p() + z.max(0.0) - z * target;
            errors[i] = ((sigmoid(z) - target) / n as f64) as f32;
        }
        loss /= n as f64;
        loss += 0.5 * opts.l2 * norm_sq(&w);

        if loss > prev_loss {
            lr *= 0.5;
            vel.iter_mut().for_each(|v| *v = 0.0);
            vel_b = 0.0;
        } else {
            lr *= 1.05;
        }
        prev_loss = loss;

        let grad = gradient(&xs, &errors);
        let l2 = opts.l2 as f32;
        let lrf = lr as f32;
        for j in 0..d {
            vel[j] = momentum * vel[j] - lrf * (grad[j] + l2 * w[j]);
            w[j] += vel[j];
        }
        let grad_b: f32 = errors.iter().sum();
        vel_b = momentum * vel_b - lrf * grad_b;
        b += vel_b;
    }

    // Fold the standardization into the weights: w'.x_raw + b' equals
    // w.((x_raw - mean) * scale) + b.
    let mut folded = vec![0f32; d];
    let mut offset = 0f64;
    for j in 0..d {
        folded[j] = w[j] * scale[j];
        offset += (w[j] * scale[j]) as f64 * mean[j] as f64;
    }
    Ok(LogisticModel { weights: folded, bias: (b as f64 - offset) as f32 })
}

fn column_stats(x: &FeatureMatrix) -> (Vec<f32>, Vec<f32>) {
    let d = x.dim();
    let n = x.rows() as f64;
    let mut sum = vec![0f64; d];
    let mut sum_sq = vec![0f64; d];
    for i in 0..x.rows() {
        for (j, &v) in x.row(i).iter().enumerate() {
            sum[j] += v as f64;
            sum_sq[j] += (v as f64) * (v as f64);
        }
    }
    let mut mean = vec![0f32; d];
    let mut scale = vec![0f32; d];
    for j in 0..d {
        let m = sum[j] / n;
        let var = (sum_sq[j] / n - m * m).max(0.0);
        mean[j] = m as f32;
        scale[j] = (1.0 / var.sqrt().max(1e-6)) as f32;
    }
    (mean, scale)
}

fn compute_scores(x: &FeatureMatrix, w: &[f32], b: f32, out: &mut [f64]) {
    let rows: Vec<f64> = (0..x.rows())
        .into_par_iter()
        .map(|i| dot(w, x.row(i)) as f64 + b as f64)
        .collect();
    out.copy_from_slice(&rows);
}

/// `out[j] = sum_i errors[i] * x[i][j]`, accumulated over fixed row chunks
/// whose partials are summed in chunk order.
fn gradient(x: &FeatureMatrix, errors: &[f32]) -> Vec<f32> {
    let d = x.dim();
    let n = x.rows();
    const CHUNK: usize = 64;
    let partials: Vec<Vec<f32>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut acc = vec![0f32; d];
            let lo = chunk * CHUNK;
            let hi = (lo + CHUNK).min(n);
            for i in lo..hi {
                let e = errors[i];
                if e == 0.0 {
                    continue;
                }
                for (a, &v) in acc.iter_mut().zip(x.row(i)) {
                    *a += e * v;
                }
            }
            acc
        })
        .collect();
    let mut grad = vec![0f32; d];
    for part in partials {
        for (g, p) in grad.iter_mut().zip(part) {
            *g += p;
        }
    }
    grad
}

fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn norm_sq(v: &[f32]) -> f64 {
    v.iter().map(|&x| (x as f64) * (x as f64)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn separable(n: usize, d: usize, seed: u64) -> (FeatureMatrix, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = FeatureMatrix::with_capacity(d, n);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let positive = i % 2 == 0;
            let center = if positive { 2.0 } else { -2.0 };
            let row: Vec<f32> = (0..d)
                .map(|j| {
                    let base = if j == 0 { center } else { 0.0 };
                    base + rng.gen_range(-0.5..0.5)
                })
                .collect();
            x.push_row(&row);
            y.push(positive);
        }
        (x, y)
    }

    #[test]
    fn separable_data_trains_cleanly() {
        let (x, y) = separable(200, 16, 1);
        let model = train_logistic(&x, &y, TrainOptions { l2: 0.01, iters: 200 }).unwrap();
        assert!(model.accuracy(&x, &y) >= 0.95);
    }

    #[test]
    fn single_class_is_rejected() {
        let mut x = FeatureMatrix::new(4);
        x.push_row(&[1.0, 0.0, 0.0, 0.0]);
        x.push_row(&[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(
            train_logistic(&x, &[true, true], TrainOptions::default()),
            Err(Error::Training(_))
        ));
    }

    #[test]
    fn training_is_deterministic() {
        let (x, y) = separable(128, 32, 9);
        let opts = TrainOptions { l2: 0.1, iters: 150 };
        let a = train_logistic(&x, &y, opts).unwrap();
        let b = train_logistic(&x, &y, opts).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.bias, b.bias);
    }

    #[test]
    fn duplicating_samples_preserves_decision_function() {
        let (x, y) = separable(80, 8, 4);
        let mut x2 = FeatureMatrix::with_capacity(8, 160);
        let mut y2 = Vec::new();
        for i in 0..x.rows() {
            x2.push_row(x.row(i));
            y2.push(y[i]);
        }
        for i in 0..x.rows() {
            x2.push_row(x.row(i));
            y2.push(y[i]);
        }
        let opts = TrainOptions { l2: 0.1, iters: 150 };
        let a = train_logistic(&x, &y, opts).unwrap();
        let b = train_logistic(&x2, &y2, opts).unwrap();
        // The mean-loss objective is unchanged under uniform duplication,
        // so the optimum (and the whole descent path up to float ordering)
        // coincides.
        let (probe, _) = separable(40, 8, 77);
        for i in 0..probe.rows() {
            let pa = a.proba(probe.row(i));
            let pb = b.proba(probe.row(i));
            assert!((pa - pb).abs() < 1e-5, "{pa} vs {pb}");
        }
    }

    #[test]
    fn sigmoid_symmetry_and_saturation() {
        let model = LogisticModel { weights: vec![0.0; 3], bias: 0.0 };
        assert_eq!(model.proba(&[1.0, 2.0, 3.0]), 0.5);
        assert!(sigmoid(10.0) >= 0.999);
        let p = sigmoid(3.3);
        let q = sigmoid(-3.3);
        assert!((p + q - 1.0).abs() < 1e-12);
    }
}

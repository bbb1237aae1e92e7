//! One-dimensional Gaussian mixtures: k-means++ initialization, EM fitting,
//! AIC component-count selection, posteriors.
//!
//! Pixel groups hold 8-bit intensities, so fitting collapses them to
//! weighted histogram bins when every sample is an integer level; the
//! weighted EM is exact and turns per-iteration cost from O(samples) into
//! O(distinct levels). Continuous samples take the dense path unchanged.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::seeding::derive_seed;

/// Variances are floored here so degenerate groups cannot produce singular
/// components.
pub const VARIANCE_FLOOR: f64 = 1e-4;

/// EM stops when the relative log-likelihood improvement drops below this.
pub const EM_TOLERANCE: f64 = 1e-6;

/// Hard cap on EM iterations.
pub const EM_MAX_ITERS: usize = 200;

const LN_2PI: f64 = 1.8378770664093453;

/// Mixture parameters for one pixel group. Components are ordered by
/// descending mean: component 1 (index 0) models high cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmParams {
    weights: Vec<f64>,
    means: Vec<f64>,
    variances: Vec<f64>,
    log_likelihood: f64,
}

impl GmmParams {
    /// Assembles parameters, normalizing weights, flooring variances, and
    /// ordering components by descending mean (ties broken by descending
    /// weight, so component 1 is always well defined).
    pub fn from_parts(weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> Self {
        assert_eq!(weights.len(), means.len());
        assert_eq!(weights.len(), variances.len());
        let total: f64 = weights.iter().sum();
        let mut comps: Vec<(f64, f64, f64)> = weights
            .into_iter()
            .zip(means)
            .zip(variances)
            .map(|((w, m), v)| (w / total, m, v.max(VARIANCE_FLOOR)))
            .collect();
        comps.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap()
                .then(b.0.partial_cmp(&a.0).unwrap())
        });
        GmmParams {
            weights: comps.iter().map(|c| c.0).collect(),
            means: comps.iter().map(|c| c.1).collect(),
            variances: comps.iter().map(|c| c.2).collect(),
            log_likelihood: f64::NAN,
        }
    }

    pub fn k(&self) -> usize {
        self.means.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// Log-likelihood of the training samples at convergence.
    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    /// AIC with 3k - 1 free parameters (k weights on the simplex, k means,
    /// k variances).
    pub fn aic(&self) -> f64 {
        2.0 * (3.0 * self.k() as f64 - 1.0) - 2.0 * self.log_likelihood
    }

    /// Copy with the high-cloud mean replaced; used after the min-max filter
    /// (weights and variances are kept).
    pub fn with_high_mean(&self, mean: f64) -> GmmParams {
        let mut out = self.clone();
        out.means[0] = mean;
        out
    }

    fn log_component_densities(&self, x: f64, out: &mut [f64]) {
        for i in 0..self.k() {
            let d = x - self.means[i];
            out[i] = self.weights[i].max(1e-300).ln()
                - 0.5 * (LN_2PI + self.variances[i].ln())
                - d * d / (2.0 * self.variances[i]);
        }
    }
}

/// Posterior responsibilities of each component for one intensity; sums
/// to 1. Index 0 is the high-cloud component.
pub fn component_posterior(gmm: &GmmParams, intensity: f64) -> Vec<f64> {
    let k = gmm.k();
    let mut logs = vec![0.0; k];
    gmm.log_component_densities(intensity, &mut logs);
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logs.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= total;
    }
    probs
}

/// Sample set as (distinct value, weight) pairs; weights are counts for
/// integer intensities and 1 per sample otherwise.
struct Weighted {
    values: Vec<f64>,
    weights: Vec<f64>,
    total: f64,
}

impl Weighted {
    fn from_samples(samples: &[f64]) -> Weighted {
        let integral = samples
            .iter()
            .all(|&x| x >= 0.0 && x <= 255.0 && x.fract() == 0.0);
        if integral {
            let mut counts = [0f64; 256];
            for &x in samples {
                counts[x as usize] += 1.0;
            }
            let mut values = Vec::new();
            let mut weights = Vec::new();
            for (v, &c) in counts.iter().enumerate() {
                if c > 0.0 {
                    values.push(v as f64);
                    weights.push(c);
                }
            }
            Weighted { values, weights, total: samples.len() as f64 }
        } else {
            Weighted {
                values: samples.to_vec(),
                weights: vec![1.0; samples.len()],
                total: samples.len() as f64,
            }
        }
    }
}

/// Fits a k-component mixture by k-means++ initialization followed by EM.
/// Deterministic for a given seed.
pub fn fit_gmm(samples: &[f64], k: usize, seed: u64) -> Result<GmmParams> {
    if !(2..=3).contains(&k) {
        return Err(Error::Precondition(format!("k must be 2 or 3, got {k}")));
    }
    if samples.len() < 10 * k {
        return Err(Error::Precondition(format!(
            "need at least {} samples, got {}",
            10 * k,
            samples.len()
        )));
    }
    let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 1e-9 {
        // All samples identical: one effective component, reported through
        // weight collapse, variances floored.
        let mut weights = vec![0.0; k];
        weights[0] = 1.0;
        let mut params = GmmParams::from_parts(weights, vec![lo; k], vec![VARIANCE_FLOOR; k]);
        let data = Weighted::from_samples(samples);
        params.log_likelihood = log_likelihood(&data, &params);
        return Ok(params);
    }

    let data = Weighted::from_samples(samples);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = kmeans_plus_plus(&data, k, &mut rng);
    let (weights, means, variances) = lloyd_moments(&data, centers);
    let mut params = GmmParams::from_parts(weights, means, variances);

    let mut prev_ll = f64::NEG_INFINITY;
    for _ in 0..EM_MAX_ITERS {
        let (ll, next) = em_step(&data, &params);
        params = next;
        params.log_likelihood = ll;
        if prev_ll.is_finite() {
            let improvement = (ll - prev_ll) / prev_ll.abs().max(1e-12);
            if improvement.abs() < EM_TOLERANCE {
                break;
            }
        }
        prev_ll = ll;
    }
    // Final likelihood for the converged parameters.
    params.log_likelihood = log_likelihood(&data, &params);
    Ok(params)
}

/// Returns the component count (2 or 3) minimizing AIC; ties favor 2.
pub fn select_k(samples: &[f64], seed: u64) -> Result<usize> {
    let two = fit_gmm(samples, 2, derive_seed(seed, 2))?;
    let three = fit_gmm(samples, 3, derive_seed(seed, 3))?;
    Ok(if three.aic() < two.aic() { 3 } else { 2 })
}

/// Fits both candidate component counts and returns the AIC winner.
pub fn fit_gmm_auto(samples: &[f64], seed: u64) -> Result<GmmParams> {
    let two = fit_gmm(samples, 2, derive_seed(seed, 2))?;
    let three = fit_gmm(samples, 3, derive_seed(seed, 3))?;
    Ok(if three.aic() < two.aic() { three } else { two })
}

/// k-means++ seeding: first center weight-proportional, later centers by
/// weighted squared distance to the nearest chosen center.
fn kmeans_plus_plus(data: &Weighted, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let pick_by_mass = |masses: &[f64], total: f64, rng: &mut ChaCha8Rng| -> usize {
        let mut target = rng.gen_range(0.0..total);
        for (i, &m) in masses.iter().enumerate() {
            target -= m;
            if target <= 0.0 {
                return i;
            }
        }
        masses.len() - 1
    };
    let mut centers = Vec::with_capacity(k);
    centers.push(data.values[pick_by_mass(&data.weights, data.total, rng)]);
    let mut mass: Vec<f64> = data
        .values
        .iter()
        .zip(&data.weights)
        .map(|(&x, &w)| w * (x - centers[0]) * (x - centers[0]))
        .collect();
    while centers.len() < k {
        let total: f64 = mass.iter().sum();
        let next = if total <= 0.0 {
            data.values[pick_by_mass(&data.weights, data.total, rng)]
        } else {
            data.values[pick_by_mass(&mass, total, rng)]
        };
        centers.push(next);
        for (m, (&x, &w)) in mass.iter_mut().zip(data.values.iter().zip(&data.weights)) {
            let nd = w * (x - next) * (x - next);
            if nd < *m {
                *m = nd;
            }
        }
    }
    centers
}

/// A short Lloyd refinement of the seeded centers, then per-cluster moments
/// as the EM starting point.
fn lloyd_moments(data: &Weighted, mut centers: Vec<f64>) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let k = centers.len();
    let n = data.values.len();
    let mut assign = vec![0usize; n];
    for _ in 0..10 {
        let mut changed = false;
        for (a, &x) in assign.iter_mut().zip(&data.values) {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (i, &c) in centers.iter().enumerate() {
                let d = (x - c).abs();
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            if *a != best {
                *a = best;
                changed = true;
            }
        }
        let mut sums = vec![0.0; k];
        let mut mass = vec![0.0; k];
        for ((&a, &x), &w) in assign.iter().zip(&data.values).zip(&data.weights) {
            sums[a] += w * x;
            mass[a] += w;
        }
        for i in 0..k {
            if mass[i] > 0.0 {
                centers[i] = sums[i] / mass[i];
            }
        }
        if !changed {
            break;
        }
    }
    let mut mass = vec![0.0; k];
    let mut means = centers.clone();
    let mut vars = vec![0.0; k];
    for ((&a, &x), &w) in assign.iter().zip(&data.values).zip(&data.weights) {
        mass[a] += w;
        vars[a] += w * (x - centers[a]) * (x - centers[a]);
    }
    let mut weights = vec![0.0; k];
    for i in 0..k {
        if mass[i] > 0.0 {
            weights[i] = mass[i] / data.total;
            vars[i] = (vars[i] / mass[i]).max(VARIANCE_FLOOR);
        } else {
            // Empty cluster: keep the seed mean with a broad variance and a
            // tiny weight; EM can still reclaim it.
            weights[i] = 1e-6;
            means[i] = centers[i];
            vars[i] = 100.0;
        }
    }
    (weights, means, vars)
}

fn em_step(data: &Weighted, params: &GmmParams) -> (f64, GmmParams) {
    let k = params.k();
    let n = data.values.len();
    let mut resp_sum = vec![0.0; k];
    let mut mean_sum = vec![0.0; k];
    let mut ll = 0.0;
    let mut logs = vec![0.0; k];
    let mut resp = vec![0.0f64; k * n];
    for (j, (&x, &w)) in data.values.iter().zip(&data.weights).enumerate() {
        params.log_component_densities(x, &mut logs);
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for l in logs.iter() {
            total += (l - max).exp();
        }
        ll += w * (max + total.ln());
        for i in 0..k {
            let r = w * (logs[i] - max).exp() / total;
            resp[i * n + j] = r;
            resp_sum[i] += r;
            mean_sum[i] += r * x;
        }
    }
    let mut weights = vec![0.0; k];
    let mut means = vec![0.0; k];
    let mut vars = vec![0.0; k];
    for i in 0..k {
        if resp_sum[i] > 1e-12 {
            means[i] = mean_sum[i] / resp_sum[i];
            let mut v = 0.0;
            for (j, &x) in data.values.iter().enumerate() {
                let d = x - means[i];
                v += resp[i * n + j] * d * d;
            }
            vars[i] = (v / resp_sum[i]).max(VARIANCE_FLOOR);
            weights[i] = resp_sum[i] / data.total;
        } else {
            // Collapsed component: carry the old parameters with zero weight.
            means[i] = params.means[i];
            vars[i] = params.variances[i];
            weights[i] = 1e-12;
        }
    }
    (ll, GmmParams::from_parts(weights, means, vars))
}

fn log_likelihood(data: &Weighted, params: &GmmParams) -> f64 {
    let k = params.k();
    let mut logs = vec![0.0; k];
    let mut ll = 0.0;
    for (&x, &w) in data.values.iter().zip(&data.weights) {
        params.log_component_densities(x, &mut logs);
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = logs.iter().map(|&l| (l - max).exp()).sum();
        ll += w * (max + total.ln());
    }
    ll
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn planted(modes: &[(f64, f64, usize)], seed: u64) -> Vec<f64> {
        // Box-Muller keeps the test oracle independent of rand_distr.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for &(mean, sd, n) in modes {
            for _ in 0..n {
                let u1: f64 = rng.gen_range(1e-12..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                out.push(mean + sd * z);
            }
        }
        out
    }

    #[test]
    fn recovers_planted_two_mode_mixture() {
        let samples = planted(&[(200.0, 5.0, 10_000), (60.0, 5.0, 10_000)], 11);
        let gmm = fit_gmm(&samples, 2, 99).unwrap();
        assert!((gmm.means()[0] - 200.0).abs() < 2.0, "{:?}", gmm.means());
        assert!((gmm.means()[1] - 60.0).abs() < 2.0, "{:?}", gmm.means());
        assert!((gmm.weights()[0] - 0.5).abs() < 0.05);
        assert!((gmm.weights()[1] - 0.5).abs() < 0.05);
    }

    #[test]
    fn recovers_planted_three_mode_mixture() {
        let samples = planted(
            &[(40.0, 4.0, 7000), (120.0, 4.0, 7000), (220.0, 4.0, 7000)],
            5,
        );
        let gmm = fit_gmm(&samples, 3, 123).unwrap();
        let want = [220.0, 120.0, 40.0];
        for (m, w) in gmm.means().iter().zip(want) {
            assert!((m - w).abs() < 3.0, "means {:?}", gmm.means());
        }
    }

    #[test]
    fn quantized_and_dense_fits_agree() {
        // Integer samples take the histogram-weighted path; jittering them
        // forces the dense path. Both must recover the same structure.
        let samples: Vec<f64> = planted(&[(60.0, 5.0, 8000), (200.0, 5.0, 8000)], 17)
            .into_iter()
            .map(|x| x.round().clamp(0.0, 255.0))
            .collect();
        let quantized = fit_gmm(&samples, 2, 3).unwrap();
        let dense: Vec<f64> = samples.iter().map(|&x| x + 1e-7).collect();
        let dense = fit_gmm(&dense, 2, 3).unwrap();
        for (a, b) in quantized.means().iter().zip(dense.means()) {
            assert!((a - b).abs() < 0.5, "{a} vs {b}");
        }
    }

    #[test]
    fn degenerate_samples_collapse() {
        let samples = vec![128.0; 100];
        let gmm = fit_gmm(&samples, 2, 0).unwrap();
        assert_eq!(gmm.means(), &[128.0, 128.0]);
        assert!(gmm.variances().iter().all(|&v| v == VARIANCE_FLOOR));
        assert!((gmm.weights()[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn select_k_prefers_true_structure() {
        let two = planted(&[(60.0, 5.0, 10_000), (200.0, 5.0, 10_000)], 21);
        assert_eq!(select_k(&two, 7).unwrap(), 2);
        let three = planted(
            &[(40.0, 4.0, 7000), (120.0, 4.0, 7000), (220.0, 4.0, 7000)],
            22,
        );
        assert_eq!(select_k(&three, 7).unwrap(), 3);
        let constant = vec![99.0; 100];
        assert_eq!(select_k(&constant, 7).unwrap(), 2);
    }

    #[test]
    fn posterior_behaviour() {
        let gmm = GmmParams::from_parts(vec![0.5, 0.5], vec![200.0, 60.0], vec![25.0, 25.0]);
        let p = component_posterior(&gmm, 250.0);
        assert!(p[0] > 0.99, "{p:?}");
        let p = component_posterior(&gmm, 200.0);
        assert!(p[0] > 0.999, "{p:?}");
        let even = GmmParams::from_parts(vec![0.5, 0.5], vec![128.0, 128.0], vec![100.0, 100.0]);
        let p = component_posterior(&even, 40.0);
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);
        let sum: f64 = component_posterior(&gmm, 130.0).iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_is_deterministic_for_fixed_seed() {
        let samples = planted(&[(80.0, 10.0, 3000), (190.0, 12.0, 3000)], 3);
        let a = fit_gmm(&samples, 2, 42).unwrap();
        let b = fit_gmm(&samples, 2, 42).unwrap();
        assert_eq!(a.weights(), b.weights());
        assert_eq!(a.means(), b.means());
        assert_eq!(a.variances(), b.variances());
        assert_eq!(a.log_likelihood(), b.log_likelihood());
    }

    #[test]
    fn component_one_has_largest_mean() {
        let samples = planted(&[(150.0, 20.0, 2000), (90.0, 30.0, 2000)], 9);
        for seed in 0..5 {
            let gmm = fit_gmm(&samples, 3, seed).unwrap();
            for pair in gmm.means().windows(2) {
                assert!(pair[0] >= pair[1], "{:?}", gmm.means());
            }
        }
    }

    #[test]
    fn too_few_samples_rejected() {
        assert!(fit_gmm(&[1.0; 19], 2, 0).is_err());
        assert!(fit_gmm(&[1.0; 29], 3, 0).is_err());
    }
}

//! Discrete AdaBoost over depth-1 decision stumps on the stacked inputs.

use crate::error::{Error, Result};
use crate::learning::StackedInput;
use crate::logistic::sigmoid;

/// A depth-1 decision stump on one stacked-input coordinate. With positive
/// polarity it votes +1 when the value is at or above the threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub polarity: i8,
}

impl Stump {
    /// Vote in {-1, +1}.
    pub fn vote(&self, input: &[f64]) -> f64 {
        let fires = input[self.feature] >= self.threshold;
        if fires == (self.polarity > 0) {
            1.0
        } else {
            -1.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaBoostRound {
    pub stump: Stump,
    /// Stage weight `0.5 * ln((1 - eps) / eps)`; positive whenever the
    /// stump beats chance.
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdaBoostModel {
    pub rounds: Vec<AdaBoostRound>,
    /// 0-1 training error of the growing ensemble after each round.
    pub train_errors: Vec<f64>,
    /// Running product of `2 sqrt(eps (1 - eps))`; an upper bound on the
    /// training error rate.
    pub error_bounds: Vec<f64>,
}

impl AdaBoostModel {
    /// Stage-weighted vote margin in [-1, 1].
    pub fn margin(&self, input: &[f64]) -> f64 {
        let alpha_total: f64 = self.rounds.iter().map(|r| r.alpha).sum();
        if alpha_total <= 0.0 {
            return 0.0;
        }
        let vote: f64 = self.rounds.iter().map(|r| r.alpha * r.stump.vote(input)).sum();
        vote / alpha_total
    }
}

/// Probability output: the normalized vote margin squashed through a
/// sigmoid, `p = sigmoid(2 * margin)`. Any monotone map of the margin
/// preserves thresholding behaviour; this one keeps p = 0.5 at a tied vote.
pub fn adaboost_proba(model: &AdaBoostModel, input: &StackedInput) -> f64 {
    sigmoid(2.0 * model.margin(input.values()))
}

/// Trains discrete AdaBoost for up to `max_rounds` rounds. Stops early when
/// no stump beats weighted error 0.5. Deterministic: stump ties break toward
/// the lower feature index, then the lower threshold, then positive
/// polarity.
pub fn train_adaboost(
    inputs: &[StackedInput],
    labels: &[bool],
    max_rounds: usize,
) -> Result<AdaBoostModel> {
    let n = inputs.len();
    if n == 0 || n != labels.len() {
        return Err(Error::Training(format!("bad shapes: {n} inputs, {} labels", labels.len())));
    }
    let positives = labels.iter().filter(|&&v| v).count();
    if positives == 0 || positives == n {
        return Err(Error::Training("both classes must be present".into()));
    }
    let dim = inputs[0].values().len();
    if inputs.iter().any(|i| i.values().len() != dim) {
        return Err(Error::Training("ragged stacked inputs".into()));
    }

    // Presort sample indices per feature once.
    let sorted: Vec<Vec<usize>> = (0..dim)
        .map(|j| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| {
                inputs[a].values()[j]
                    .partial_cmp(&inputs[b].values()[j])
                    .unwrap()
                    .then(a.cmp(&b))
            });
            idx
        })
        .collect();
    let y: Vec<f64> = labels.iter().map(|&v| if v { 1.0 } else { -1.0 }).collect();

    let mut weights = vec![1.0 / n as f64; n];
    let mut model = AdaBoostModel::default();
    let mut votes = vec![0.0f64; n];
    let mut bound = 1.0f64;

    for _ in 0..max_rounds {
        let Some((eps, stump)) = best_stump(inputs, &y, &weights, &sorted) else {
            break;
        };
        if eps >= 0.5 {
            break;
        }
        let eps_c = eps.clamp(1e-12, 1.0 - 1e-12);
        let alpha = 0.5 * ((1.0 - eps_c) / eps_c).ln();
        model.rounds.push(AdaBoostRound { stump, alpha });

        // Reweight: misclassified up, correct down, then renormalize.
        let mut total = 0.0;
        for i in 0..n {
            let h = stump.vote(inputs[i].values());
            weights[i] *= (-alpha * y[i] * h).exp();
            total += weights[i];
            votes[i] += alpha * h;
        }
        for w in weights.iter_mut() {
            *w /= total;
        }

        // A zero vote margin counts as an error.
        let err01 = (0..n).filter(|&i| votes[i] * y[i] <= 0.0).count() as f64 / n as f64;
        model.train_errors.push(err01);
        bound *= 2.0 * (eps_c * (1.0 - eps_c)).sqrt();
        model.error_bounds.push(bound);
    }
    if model.rounds.is_empty() {
        return Err(Error::Training("no stump beat chance in round 1".into()));
    }
    Ok(model)
}

/// The stump minimizing weighted error over all features, thresholds, and
/// polarities. Thresholds are midpoints between consecutive distinct values
/// plus one below the minimum.
fn best_stump(
    inputs: &[StackedInput],
    y: &[f64],
    weights: &[f64],
    sorted: &[Vec<usize>],
) -> Option<(f64, Stump)> {
    let total_pos: f64 = weights.iter().zip(y).filter(|(_, &t)| t > 0.0).map(|(&w, _)| w).sum();
    let total: f64 = weights.iter().sum();
    let total_neg = total - total_pos;

    let mut best: Option<(f64, Stump)> = None;
    for (feature, order) in sorted.iter().enumerate() {
        // Walking the sorted values, `below_pos`/`below_neg` accumulate the
        // weight strictly below the candidate threshold.
        let mut below_pos = 0.0;
        let mut below_neg = 0.0;
        let mut k = 0;
        while k <= order.len() {
            let threshold = if k == 0 {
                inputs[order[0]].values()[feature] - 1.0
            } else if k == order.len() {
                inputs[order[k - 1]].values()[feature] + 1.0
            } else {
                let lo = inputs[order[k - 1]].values()[feature];
                let hi = inputs[order[k]].values()[feature];
                if lo == hi {
                    // Not a boundary between distinct values; absorb and move on.
                    let i = order[k];
                    if y[i] > 0.0 {
                        below_pos += weights[i];
                    } else {
                        below_neg += weights[i];
                    }
                    k += 1;
                    continue;
                }
                (lo + hi) / 2.0
            };
            // Positive polarity predicts +1 at/above the threshold:
            // errors = positives below + negatives at/above.
            let err_pos = below_pos + (total_neg - below_neg);
            let err_neg = total - err_pos;
            for (err, polarity) in [(err_pos, 1i8), (err_neg, -1i8)] {
                let candidate = Stump { feature, threshold, polarity };
                let better = match &best {
                    None => true,
                    Some((be, bs)) => {
                        err < *be - 1e-15
                            || ((err - *be).abs() <= 1e-15
                                && (candidate.feature, candidate.threshold, -candidate.polarity)
                                    < (bs.feature, bs.threshold, -bs.polarity))
                    }
                };
                if better {
                    best = Some((err, candidate));
                }
            }
            if k < order.len() {
                let i = order[k];
                if y[i] > 0.0 {
                    below_pos += weights[i];
                } else {
                    below_neg += weights[i];
                }
            }
            k += 1;
        }
    }
    best
}

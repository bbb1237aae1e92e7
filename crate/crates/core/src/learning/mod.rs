//! Weak classifiers over the two feature kinds and their stacked inputs.
//!
//! Positives are scarce, so negatives are split into 100 time-disjoint
//! batches; one logistic model per (feature kind, batch) yields 200 weak
//! classifiers whose probability outputs feed the AdaBoost stacker.

mod adaboost;
mod bundle;

pub use adaboost::{adaboost_proba, train_adaboost, AdaBoostModel, AdaBoostRound, Stump};
pub use bundle::ModelBundle;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureVector};
use crate::imagery::Timestamp;
use crate::logistic::{train_logistic, FeatureMatrix, LogisticModel, TrainOptions};
use crate::seeding::derive_seed;

/// Weak classifiers per feature kind.
pub const WEAKS_PER_KIND: usize = 100;

/// One logistic weak classifier bound to a feature kind and negative batch.
#[derive(Debug, Clone)]
pub struct WeakClassifier {
    pub kind: FeatureKind,
    pub batch_id: usize,
    pub model: LogisticModel,
}

impl WeakClassifier {
    /// Probability output; errors on a feature-dimension mismatch.
    pub fn proba(&self, feature: &FeatureVector) -> Result<f64> {
        weak_proba(self, feature)
    }
}

/// Sigmoid probability of a weak classifier on one feature vector.
pub fn weak_proba(classifier: &WeakClassifier, feature: &FeatureVector) -> Result<f64> {
    if feature.kind != classifier.kind || feature.values.len() != classifier.model.dim() {
        return Err(Error::Precondition(format!(
            "feature kind/dim mismatch: classifier {:?}/{}, feature {:?}/{}",
            classifier.kind,
            classifier.model.dim(),
            feature.kind,
            feature.values.len()
        )));
    }
    Ok(classifier.model.proba(&feature.values))
}

/// Trains one weak classifier on a batch (positives plus that batch's
/// negatives).
pub fn train_weak(
    features: &FeatureMatrix,
    labels: &[bool],
    kind: FeatureKind,
    batch_id: usize,
) -> Result<WeakClassifier> {
    if features.dim() != kind.dim() {
        return Err(Error::Training(format!(
            "feature dim {} does not match {:?}",
            features.dim(),
            kind
        )));
    }
    let model = train_logistic(features, labels, TrainOptions { l2: 0.1, iters: 120 })?;
    Ok(WeakClassifier { kind, batch_id, model })
}

/// Splits negative samples into `n_batches` contiguous, time-disjoint
/// batches (no timestamp is shared across batches) and downsamples each one
/// to `positives_count` items. Returns per-batch index lists into the input.
pub fn make_batches(
    timestamps: &[Timestamp],
    n_batches: usize,
    positives_count: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if n_batches == 0 || positives_count == 0 {
        return Err(Error::Precondition("batches and positives must be positive".into()));
    }
    if timestamps.len() < n_batches {
        return Err(Error::Training(format!(
            "need at least {n_batches} negatives, have {}",
            timestamps.len()
        )));
    }
    // Group indices by distinct timestamp, in time order.
    let mut order: Vec<usize> = (0..timestamps.len()).collect();
    order.sort_by_key(|&i| (timestamps[i], i));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some(g) if timestamps[g[0]] == timestamps[i] => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    if groups.len() < n_batches {
        return Err(Error::Training(format!(
            "need {n_batches} distinct time bins, have {}",
            groups.len()
        )));
    }

    // Pack whole timestamp groups into contiguous segments, balancing counts
    // while leaving one group for every batch still to come.
    let total: usize = groups.iter().map(Vec::len).sum();
    let per_batch = (total / n_batches).max(1);
    let n_groups = groups.len();
    let mut batches: Vec<Vec<usize>> = Vec::with_capacity(n_batches);
    let mut current: Vec<usize> = Vec::new();
    for (gi, group) in groups.into_iter().enumerate() {
        current.extend(group);
        let groups_left = n_groups - gi - 1;
        let batches_left = n_batches - batches.len();
        let must_close = groups_left == batches_left.saturating_sub(1);
        let can_close = batches_left > 1 && groups_left >= batches_left - 1;
        if must_close || (can_close && current.len() >= per_batch) {
            batches.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        batches.push(current);
    }
    debug_assert_eq!(batches.len(), n_batches);

    // Downsample each batch to the positive count, seeded per batch.
    for (b, batch) in batches.iter_mut().enumerate() {
        if batch.len() > positives_count {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, b as u64));
            batch.shuffle(&mut rng);
            batch.truncate(positives_count);
        }
        batch.sort_unstable();
    }
    Ok(batches)
}

/// The 200 probabilities fed to the stacker: segmented-HOG batches 0..99,
/// then motion-histogram batches 0..99.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedInput(pub Vec<f64>);

impl StackedInput {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Evaluates every weak classifier (assumed ordered HOG first, then motion)
/// on the window's two feature vectors.
pub fn stacked_input(
    weaks: &[WeakClassifier],
    hog: &FeatureVector,
    motion: &FeatureVector,
) -> Result<StackedInput> {
    let mut values = Vec::with_capacity(weaks.len());
    for weak in weaks {
        let feature = match weak.kind {
            FeatureKind::SegmentedHog => hog,
            FeatureKind::MotionHistogram => motion,
        };
        values.push(weak_proba(weak, feature)?);
    }
    Ok(StackedInput(values))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(m: i64) -> Timestamp {
        Timestamp::from_minutes(m)
    }

    #[test]
    fn singleton_batches() {
        let stamps: Vec<Timestamp> = (0..100).map(|i| ts(i * 30)).collect();
        let batches = make_batches(&stamps, 100, 1, 7).unwrap();
        assert_eq!(batches.len(), 100);
        assert!(batches.iter().all(|b| b.len() == 1));
        let mut all: Vec<usize> = batches.iter().flatten().copied().collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 100);
    }

    #[test]
    fn batches_are_time_disjoint_and_sized() {
        // 500 negatives over 125 distinct timestamps, 4 per stamp.
        let stamps: Vec<Timestamp> = (0..125).flat_map(|t| (0..4).map(move |_| ts(t * 15))).collect();
        let n_pos = 3;
        let batches = make_batches(&stamps, 100, n_pos, 9).unwrap();
        assert_eq!(batches.len(), 100);
        let mut seen_stamps: Vec<Vec<Timestamp>> = Vec::new();
        for b in &batches {
            assert!(!b.is_empty() && b.len() <= n_pos);
            let mut sts: Vec<Timestamp> = b.iter().map(|&i| stamps[i]).collect();
            sts.sort();
            sts.dedup();
            seen_stamps.push(sts);
        }
        for i in 0..seen_stamps.len() {
            for j in i + 1..seen_stamps.len() {
                for t in &seen_stamps[i] {
                    assert!(!seen_stamps[j].contains(t), "batches {i} and {j} share {t}");
                }
            }
        }
    }

    #[test]
    fn insufficient_negatives_error() {
        let stamps: Vec<Timestamp> = (0..40).map(|i| ts(i)).collect();
        assert!(matches!(make_batches(&stamps, 100, 5, 0), Err(Error::Training(_))));
        // Enough negatives but too few distinct bins.
        let repeated: Vec<Timestamp> = (0..200).map(|i| ts(i % 50)).collect();
        assert!(matches!(make_batches(&repeated, 100, 5, 0), Err(Error::Training(_))));
    }

    #[test]
    fn weak_proba_checks_dimensions() {
        let weak = WeakClassifier {
            kind: FeatureKind::MotionHistogram,
            batch_id: 0,
            model: LogisticModel { weights: vec![0.0; 27], bias: 0.0 },
        };
        let good = FeatureVector { kind: FeatureKind::MotionHistogram, values: vec![0.0; 27] };
        assert_eq!(weak_proba(&weak, &good).unwrap(), 0.5);
        let bad = FeatureVector { kind: FeatureKind::SegmentedHog, values: vec![0.0; 324] };
        assert!(weak_proba(&weak, &bad).is_err());
        // Saturation and symmetry of the sigmoid output.
        let strong = WeakClassifier {
            kind: FeatureKind::MotionHistogram,
            batch_id: 0,
            model: LogisticModel { weights: vec![100.0; 27], bias: 0.0 },
        };
        let ones = FeatureVector { kind: FeatureKind::MotionHistogram, values: vec![1.0; 27] };
        assert!(weak_proba(&strong, &ones).unwrap() >= 0.999);
        let negated = WeakClassifier {
            kind: FeatureKind::MotionHistogram,
            batch_id: 0,
            model: LogisticModel { weights: vec![-100.0; 27], bias: 0.0 },
        };
        let p = weak_proba(&strong, &ones).unwrap();
        let q = weak_proba(&negated, &ones).unwrap();
        assert!((p + q - 1.0).abs() < 1e-9);
    }

    #[test]
    fn train_weak_on_separable_features() {
        let mut x = FeatureMatrix::new(27);
        let mut y = Vec::new();
        for i in 0..80 {
            let mut row = vec![0.02f32; 27];
            if i % 2 == 0 {
                row[3] = 0.9;
            } else {
                row[20] = 0.9;
            }
            x.push_row(&row);
            y.push(i % 2 == 0);
        }
        let weak = train_weak(&x, &y, FeatureKind::MotionHistogram, 0).unwrap();
        assert!(weak.model.accuracy(&x, &y) >= 0.95);
        // Single class is rejected.
        assert!(train_weak(&x, &vec![true; 80], FeatureKind::MotionHistogram, 0).is_err());
    }
}

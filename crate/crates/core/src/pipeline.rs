//! Training and detection orchestration shared by the CLI and the
//! acceptance suite.
//!
//! `train_bank` fits the per-(hour, tile) mixtures; `train_model` runs the
//! whole supervised chain (cascade models, features, weak classifiers,
//! stacker) on a temporal train/cross-validation split; `detect_frames`
//! scores a frame sequence with a trained bundle.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::detector::{score_frame, Detection, FrameScores};
use crate::error::{Error, Result};
use crate::features::{motion_histogram, segmented_hog, FeatureKind, FeatureVector};
use crate::imagery::{BBox, Frame, LabeledCloud, Timestamp, Validity};
use crate::learning::{
    make_batches, stacked_input, train_adaboost, train_weak, ModelBundle, StackedInput,
    WeakClassifier, WEAKS_PER_KIND,
};
use crate::logistic::FeatureMatrix;
use crate::motion::{motion_field, MotionField, DEFAULT_DISPLACEMENT, DEFAULT_SPAN_HOURS};
use crate::proposals::{
    average_template, cascade_filter, label_samples, sample_indices, train_patch_classifier,
    vectorize_patch, CascadeThresholds, DataPartition, Sample, SampleLabel, Segment,
    WindowPyramid, PATCH_DIM,
};
use crate::seeding::derive_seed;
use crate::segmentation::{segment_frame, GmmBank, DEFAULT_SIGMA};

/// Every tunable with its published default.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Segmentation cut on `I * p1`.
    pub sigma: f64,
    /// Motion displacement in pixels (rows, cols); 10 px due west.
    pub displacement: (i32, i32),
    /// Motion correlation span in hours.
    pub span_hours: f64,
    pub thresholds: CascadeThresholds,
    /// Suppression limit on detection overlap.
    pub nms_iou: f64,
    /// Boosting rounds.
    pub rounds: usize,
    /// Detection cutoff.
    pub p0: f64,
    /// Weak classifiers per feature kind.
    pub weaks_per_kind: usize,
    /// Negative-to-positive ratio for the stacker's training mix.
    pub stack_negative_ratio: usize,
    /// Temporal split fractions (train, cross-validation) by days.
    pub train_frac: f64,
    pub cv_frac: f64,
    /// Cap on per-group samples for mixture fitting.
    pub max_group_samples: usize,
    /// Cap on positive patches held in memory for the patch classifier.
    pub max_patch_rows: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            sigma: DEFAULT_SIGMA,
            displacement: DEFAULT_DISPLACEMENT,
            span_hours: DEFAULT_SPAN_HOURS,
            thresholds: CascadeThresholds::default(),
            nms_iou: 0.30,
            rounds: 40,
            p0: 0.50,
            weaks_per_kind: WEAKS_PER_KIND,
            stack_negative_ratio: 10,
            train_frac: 0.50,
            cv_frac: 0.15,
            max_group_samples: 6000,
            max_patch_rows: 384,
            seed: 20080101,
        }
    }
}

/// Fits the mixture bank on the frames (normally the training partition).
pub fn train_bank(frames: &[Frame], cfg: &PipelineConfig) -> Result<GmmBank> {
    GmmBank::train(frames, cfg.max_group_samples, derive_seed(cfg.seed, 0xba_41))
}

/// Per-frame context computed once and reused across training stages.
pub struct FrameContext {
    pub index: usize,
    pub segment: Segment,
    pub segmented: Frame,
    pub motion: MotionField,
    pub samples: Vec<Sample>,
}

/// Accuracy bookkeeping from `train_model`.
#[derive(Debug, Clone, Default)]
pub struct TrainingReport {
    pub positives: usize,
    pub negatives: usize,
    pub patch_train_accuracy: f64,
    pub patch_cv_accuracy: f64,
    pub weak_hog_cv_balanced_accuracy: f64,
    pub weak_motion_cv_balanced_accuracy: f64,
    pub ensemble_cv_balanced_accuracy: f64,
    pub per_weak_cv_accuracy: Vec<(FeatureKind, f64)>,
}

/// Trains the full model on a frame sequence with labels: temporal split,
/// patch classifier and template, the proposal cascade, 100+100 weak
/// classifiers on time-disjoint negative batches, and the AdaBoost stacker
/// on a 1:10 positive-to-negative mix.
pub fn train_model(
    frames: &[Frame],
    labels: &[LabeledCloud],
    bank: GmmBank,
    cfg: &PipelineConfig,
) -> Result<(ModelBundle, TrainingReport)> {
    let timestamps: Vec<Timestamp> = frames.iter().map(|f| f.timestamp).collect();
    let partition = DataPartition::by_day_fractions(&timestamps, cfg.train_frac, cfg.cv_frac)?;
    let labels_by_frame: BTreeMap<Timestamp, Vec<BBox>> = {
        let mut map: BTreeMap<Timestamp, Vec<BBox>> = BTreeMap::new();
        for l in labels {
            map.entry(l.timestamp).or_default().push(l.bbox);
        }
        map
    };

    let pyramid = WindowPyramid::default();
    let mut report = TrainingReport::default();

    // Segment + motion + window labels for every usable train/cv frame.
    let usable: Vec<usize> = (0..frames.len())
        .filter(|&i| {
            frames[i].validity == Validity::Ok
                && partition.segment(frames[i].timestamp) != Segment::Test
        })
        .collect();
    let contexts: Result<Vec<FrameContext>> = usable
        .par_iter()
        .map(|&i| {
            let frame = &frames[i];
            let history_start = i.saturating_sub((cfg.span_hours * 4.0) as usize);
            let motion = motion_field(
                &frames[history_start..=i],
                cfg.displacement,
                cfg.span_hours,
            )?;
            let segmented = segment_frame(frame, &bank, cfg.sigma)?;
            let windows = pyramid.generate_windows(frame.width(), frame.height());
            let frame_labels = labels_by_frame
                .get(&frame.timestamp)
                .map(Vec::as_slice)
                .unwrap_or(&[]);
            let samples = label_samples(&windows, frame_labels, frame.timestamp);
            Ok(FrameContext {
                index: i,
                segment: partition.segment(frame.timestamp),
                segmented,
                motion,
                samples,
            })
        })
        .filter(|r| {
            // Frames without enough motion history are skipped, matching
            // detection behaviour at the sequence start.
            !matches!(r, Err(Error::InsufficientHistory(_)))
        })
        .collect();
    let contexts = contexts?;
    if contexts.is_empty() {
        return Err(Error::Training("no usable training frames".into()));
    }

    // ---- filter-1 survivors feed the patch classifier -------------------
    let mut patch_sets: BTreeMap<(Segment, bool), Vec<(usize, BBox)>> = BTreeMap::new();
    let mut survivors_filter1: Vec<(usize, usize)> = Vec::new(); // (context idx, sample idx)
    for (ci, ctx) in contexts.iter().enumerate() {
        let integral = ctx.segmented.integral();
        for (si, sample) in ctx.samples.iter().enumerate() {
            let mean = integral.box_mean(&sample.bbox);
            if !crate::proposals::filter_intensity(mean, &cfg.thresholds) {
                continue;
            }
            survivors_filter1.push((ci, si));
            let class = match sample.label {
                SampleLabel::Positive => true,
                SampleLabel::Negative => false,
                SampleLabel::Ignored => continue,
            };
            patch_sets.entry((ctx.segment, class)).or_default().push((ci, sample.bbox));
        }
    }

    let gather_patches = |entries: &[(usize, BBox)], cap: usize, tag: u64| -> Result<FeatureMatrix> {
        let take = sample_indices(entries.len(), cap, derive_seed(cfg.seed, tag));
        let rows: Result<Vec<Vec<f32>>> = take
            .par_iter()
            .map(|&i| {
                let (ci, bbox) = entries[i];
                vectorize_patch(&contexts[ci].segmented, &bbox)
            })
            .collect();
        let rows = rows?;
        let mut matrix = FeatureMatrix::with_capacity(PATCH_DIM, rows.len());
        for row in &rows {
            matrix.push_row(row);
        }
        Ok(matrix)
    };

    let empty = Vec::new();
    let train_pos_entries = patch_sets.get(&(Segment::Train, true)).unwrap_or(&empty);
    let train_neg_entries = patch_sets.get(&(Segment::Train, false)).unwrap_or(&empty);
    if train_pos_entries.is_empty() || train_neg_entries.is_empty() {
        return Err(Error::Training(
            "need positive and negative filter-1 survivors in the training split".into(),
        ));
    }
    let cap = cfg.max_patch_rows;
    let train_pos = gather_patches(train_pos_entries, cap, 0x01)?;
    let train_neg = gather_patches(train_neg_entries, cap, 0x02)?;
    let cv_pos = gather_patches(
        patch_sets.get(&(Segment::CrossValidation, true)).unwrap_or(&empty),
        cap / 2,
        0x03,
    )?;
    let cv_neg = gather_patches(
        patch_sets.get(&(Segment::CrossValidation, false)).unwrap_or(&empty),
        cap / 2,
        0x04,
    )?;
    let patch = train_patch_classifier(
        &train_pos,
        &train_neg,
        &cv_pos,
        &cv_neg,
        derive_seed(cfg.seed, 0x05),
    )?;
    report.patch_train_accuracy = patch.train_accuracy;
    report.patch_cv_accuracy = patch.cv_accuracy;

    // ---- average comma template over training labels --------------------
    let template_patches: Result<Vec<Vec<f32>>> = contexts
        .par_iter()
        .filter(|ctx| ctx.segment == Segment::Train)
        .map(|ctx| {
            let frame_labels = labels_by_frame
                .get(&ctx.segmented.timestamp)
                .map(Vec::as_slice)
                .unwrap_or(&[]);
            frame_labels
                .iter()
                .map(|bbox| vectorize_patch(&ctx.segmented, bbox))
                .collect::<Result<Vec<Vec<f32>>>>()
        })
        .collect::<Result<Vec<Vec<Vec<f32>>>>>()
        .map(|nested| nested.into_iter().flatten().collect());
    let template = average_template(&template_patches?)?;

    // ---- full cascade over train/cv frames ------------------------------
    let survivors: Vec<(usize, Vec<Sample>)> = contexts
        .par_iter()
        .enumerate()
        .map(|(ci, ctx)| {
            let integral = ctx.segmented.integral();
            let surviving = cascade_filter(
                &ctx.segmented,
                ctx.samples.clone(),
                &integral,
                &patch,
                &template,
                &cfg.thresholds,
            );
            (ci, surviving)
        })
        .collect();

    // ---- features for surviving labeled windows -------------------------
    struct FeatRow {
        segment: Segment,
        positive: bool,
        timestamp: Timestamp,
        hog: FeatureVector,
        hist: FeatureVector,
    }
    let feature_rows: Result<Vec<Vec<FeatRow>>> = survivors
        .par_iter()
        .map(|(ci, samples)| {
            let ctx = &contexts[*ci];
            samples
                .iter()
                .filter_map(|s| match s.label {
                    SampleLabel::Positive => Some((s, true)),
                    SampleLabel::Negative => Some((s, false)),
                    SampleLabel::Ignored => None,
                })
                .map(|(s, positive)| {
                    let patch_px =
                        crate::imagery::resize_bilinear(&ctx.segmented, &s.bbox, 256)?;
                    Ok(FeatRow {
                        segment: ctx.segment,
                        positive,
                        timestamp: s.timestamp,
                        hog: segmented_hog(&patch_px)?,
                        hist: motion_histogram(&ctx.motion.box_levels(&s.bbox))?,
                    })
                })
                .collect::<Result<Vec<FeatRow>>>()
        })
        .collect();
    let rows: Vec<FeatRow> = feature_rows?.into_iter().flatten().collect();

    let train_rows: Vec<&FeatRow> = rows.iter().filter(|r| r.segment == Segment::Train).collect();
    let cv_rows: Vec<&FeatRow> =
        rows.iter().filter(|r| r.segment == Segment::CrossValidation).collect();
    let positives: Vec<&&FeatRow> = train_rows.iter().filter(|r| r.positive).collect();
    let negatives: Vec<&&FeatRow> = train_rows.iter().filter(|r| !r.positive).collect();
    report.positives = positives.len();
    report.negatives = negatives.len();
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::Training("cascade left a single class for training".into()));
    }

    // ---- 100 + 100 weak classifiers --------------------------------------
    let negative_stamps: Vec<Timestamp> = negatives.iter().map(|r| r.timestamp).collect();
    let batches = make_batches(
        &negative_stamps,
        cfg.weaks_per_kind,
        positives.len(),
        derive_seed(cfg.seed, 0x06),
    )?;

    let build_matrix = |kind: FeatureKind, rows: &[&&FeatRow]| -> FeatureMatrix {
        let mut m = FeatureMatrix::with_capacity(kind.dim(), rows.len());
        for r in rows {
            let v = match kind {
                FeatureKind::SegmentedHog => &r.hog.values,
                FeatureKind::MotionHistogram => &r.hist.values,
            };
            m.push_row(v);
        }
        m
    };

    let mut weaks: Vec<WeakClassifier> = Vec::with_capacity(2 * cfg.weaks_per_kind);
    let mut cv_bal: BTreeMap<&'static str, Vec<f64>> = BTreeMap::new();
    let (mut cv_hog, mut cv_y) = (FeatureMatrix::new(FeatureKind::SegmentedHog.dim()), Vec::new());
    let mut cv_motion = FeatureMatrix::new(FeatureKind::MotionHistogram.dim());
    for r in &cv_rows {
        cv_hog.push_row(&r.hog.values);
        cv_motion.push_row(&r.hist.values);
        cv_y.push(r.positive);
    }

    for kind in [FeatureKind::SegmentedHog, FeatureKind::MotionHistogram] {
        let kind_weaks: Result<Vec<WeakClassifier>> = batches
            .par_iter()
            .enumerate()
            .map(|(batch_id, batch)| {
                // Equal class counts per weak classifier: when positives
                // outnumber the negative batch, each batch trains against
                // its own seeded positive subsample.
                let pos_take = sample_indices(
                    positives.len(),
                    batch.len().max(64).min(positives.len()),
                    derive_seed(cfg.seed, 0x0800 + batch_id as u64),
                );
                let mut batch_rows: Vec<&&FeatRow> =
                    pos_take.iter().map(|&i| positives[i]).collect();
                batch_rows.extend(batch.iter().map(|&i| negatives[i]));
                let mut y = vec![true; pos_take.len()];
                y.resize(y.len() + batch.len(), false);
                let matrix = build_matrix(kind, &batch_rows);
                train_weak(&matrix, &y, kind, batch_id)
            })
            .collect();
        let kind_weaks = kind_weaks?;
        if !cv_y.is_empty() && cv_y.iter().any(|&v| v) && cv_y.iter().any(|&v| !v) {
            let cv_matrix = match kind {
                FeatureKind::SegmentedHog => &cv_hog,
                FeatureKind::MotionHistogram => &cv_motion,
            };
            for w in &kind_weaks {
                let acc = w.model.balanced_accuracy(cv_matrix, &cv_y);
                report.per_weak_cv_accuracy.push((kind, acc));
                cv_bal
                    .entry(match kind {
                        FeatureKind::SegmentedHog => "hog",
                        FeatureKind::MotionHistogram => "motion",
                    })
                    .or_default()
                    .push(acc);
            }
        }
        weaks.extend(kind_weaks);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    report.weak_hog_cv_balanced_accuracy = cv_bal.get("hog").map(|v| mean(v)).unwrap_or(f64::NAN);
    report.weak_motion_cv_balanced_accuracy =
        cv_bal.get("motion").map(|v| mean(v)).unwrap_or(f64::NAN);

    // ---- stacked inputs and AdaBoost -------------------------------------
    let stack_neg_take = sample_indices(
        negatives.len(),
        positives.len() * cfg.stack_negative_ratio,
        derive_seed(cfg.seed, 0x07),
    );
    let mut stack_rows: Vec<&&FeatRow> = positives.clone();
    stack_rows.extend(stack_neg_take.iter().map(|&i| &negatives[i]));
    let mut stack_labels = vec![true; positives.len()];
    stack_labels.resize(stack_labels.len() + stack_neg_take.len(), false);
    let stacked: Result<Vec<StackedInput>> = stack_rows
        .par_iter()
        .map(|r| stacked_input(&weaks, &r.hog, &r.hist))
        .collect();
    let adaboost = train_adaboost(&stacked?, &stack_labels, cfg.rounds)?;

    // Held-out balanced accuracy of the stacked ensemble.
    if !cv_y.is_empty() && cv_y.iter().any(|&v| v) && cv_y.iter().any(|&v| !v) {
        let cv_stacked: Result<Vec<StackedInput>> = cv_rows
            .par_iter()
            .map(|r| stacked_input(&weaks, &r.hog, &r.hist))
            .collect();
        let cv_stacked = cv_stacked?;
        let mut hit = [0usize; 2];
        let mut tot = [0usize; 2];
        for (input, &truth) in cv_stacked.iter().zip(&cv_y) {
            let p = crate::learning::adaboost_proba(&adaboost, input);
            let class = truth as usize;
            tot[class] += 1;
            if (p >= 0.5) == truth {
                hit[class] += 1;
            }
        }
        let rate = |c: usize| hit[c] as f64 / tot[c].max(1) as f64;
        report.ensemble_cv_balanced_accuracy = (rate(0) + rate(1)) / 2.0;
    } else {
        report.ensemble_cv_balanced_accuracy = f64::NAN;
    }

    let bundle = ModelBundle {
        sigma: cfg.sigma,
        thresholds: cfg.thresholds,
        displacement: cfg.displacement,
        span_hours: cfg.span_hours,
        nms_iou: cfg.nms_iou,
        default_p0: cfg.p0,
        bank,
        patch,
        template,
        weaks,
        adaboost,
    };
    Ok((bundle, report))
}

/// Scores every frame of the sequence that has enough history, in time
/// order. Invalid frames and the warm-up window are skipped with a note in
/// the returned diagnostics.
pub fn score_frames(
    frames: &[Frame],
    bundle: &ModelBundle,
) -> (Vec<FrameScores>, Vec<String>) {
    let indices: Vec<usize> = (0..frames.len()).collect();
    let scored: Vec<std::result::Result<FrameScores, String>> = indices
        .par_iter()
        .map(|&i| {
            let frame = &frames[i];
            if frame.validity != Validity::Ok {
                return Err(format!("{}: skipped (validity)", frame.timestamp));
            }
            let start = i.saturating_sub((bundle.span_hours * 4.0) as usize);
            match score_frame(&frames[start..=i], bundle) {
                Ok(scores) => Ok(scores),
                Err(Error::InsufficientHistory(_)) => {
                    Err(format!("{}: skipped (insufficient history)", frame.timestamp))
                }
                Err(e) => Err(format!("{}: skipped ({e})", frame.timestamp)),
            }
        })
        .collect();
    let mut out = Vec::new();
    let mut diagnostics = Vec::new();
    for item in scored {
        match item {
            Ok(s) => out.push(s),
            Err(d) => diagnostics.push(d),
        }
    }
    (out, diagnostics)
}

/// Detections over a frame sequence at cutoff `p0`.
pub fn detect_frames(
    frames: &[Frame],
    bundle: &ModelBundle,
    p0: f64,
) -> (Vec<Detection>, Vec<String>) {
    let (scored, diagnostics) = score_frames(frames, bundle);
    let detections = scored
        .iter()
        .flat_map(|s| s.detections(p0, bundle.nms_iou))
        .collect();
    (detections, diagnostics)
}

//! Evaluation protocol: cloud recall at IoU >= 0.50, storm recall by
//! point-in-box during the event interval, missing-rate curves over the
//! cutoff grid, and recall-precision curves for baseline comparisons.

mod baselines;

pub use baselines::{
    baseline_intensity, baseline_spatial_intensity, boxes_from_gmm2d, bright_support,
    connected_components, fit_box,
};

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::detector::{Detection, FrameScores};
use crate::imagery::{LabeledCloud, StormEvent, Timestamp};

/// IoU at which a detection matches a label.
pub const MATCH_IOU: f64 = 0.50;

/// Fraction of labels matched by at least one detection with IoU >= 0.50 on
/// the same frame.
pub fn cloud_recall(detections: &[Detection], labels: &[LabeledCloud]) -> f64 {
    if labels.is_empty() {
        return 1.0;
    }
    let by_frame = group_by_timestamp(detections);
    let matched = labels
        .iter()
        .filter(|label| {
            by_frame
                .get(&label.timestamp)
                .map(|dets| dets.iter().any(|d| d.bbox.iou(&label.bbox) >= MATCH_IOU))
                .unwrap_or(false)
        })
        .count();
    matched as f64 / labels.len() as f64
}

/// Fraction of storm events whose location falls inside at least one
/// detection box on at least one frame during the event's interval.
pub fn storm_recall(detections: &[Detection], storms: &[StormEvent]) -> f64 {
    if storms.is_empty() {
        return 1.0;
    }
    let caught = storms.iter().filter(|s| storm_caught(detections, s)).count();
    caught as f64 / storms.len() as f64
}

fn storm_caught(detections: &[Detection], storm: &StormEvent) -> bool {
    detections
        .iter()
        .any(|d| storm.active_at(d.timestamp) && d.bbox.contains(storm.row, storm.col))
}

/// Mean number of detections per frame over `frame_count` frames.
pub fn detections_per_frame(detections: &[Detection], frame_count: usize) -> f64 {
    if frame_count == 0 {
        return 0.0;
    }
    detections.len() as f64 / frame_count as f64
}

fn group_by_timestamp(detections: &[Detection]) -> BTreeMap<Timestamp, Vec<&Detection>> {
    let mut map: BTreeMap<Timestamp, Vec<&Detection>> = BTreeMap::new();
    for d in detections {
        map.entry(d.timestamp).or_default().push(d);
    }
    map
}

// ---------------------------------------------------------------------------
// Missing-rate curve
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct CurveSample {
    pub p0: f64,
    pub detections_per_frame: f64,
    pub cloud_missing_rate: f64,
    pub storm_missing_rate: f64,
}

/// Sweeps the cutoff grid over pre-threshold frame scores: each sample
/// applies the cutoff and suppression, then reports detections per frame and
/// the cloud/storm missing rates.
pub fn missing_rate_curve(
    scored: &[FrameScores],
    labels: &[LabeledCloud],
    storms: &[StormEvent],
    p0_grid: &[f64],
    nms_iou: f64,
) -> Vec<CurveSample> {
    let frames = scored.len().max(1);
    p0_grid
        .iter()
        .map(|&p0| {
            let detections: Vec<Detection> = scored
                .iter()
                .flat_map(|fs| fs.detections(p0, nms_iou))
                .collect();
            CurveSample {
                p0,
                detections_per_frame: detections.len() as f64 / frames as f64,
                cloud_missing_rate: 1.0 - cloud_recall(&detections, labels),
                storm_missing_rate: 1.0 - storm_recall(&detections, storms),
            }
        })
        .collect()
}

pub fn curve_to_csv(curve: &[CurveSample]) -> String {
    let mut out = String::from("p0,detections_per_frame,cloud_missing_rate,storm_missing_rate\n");
    for s in curve {
        let _ = writeln!(
            out,
            "{:.4},{:.6},{:.6},{:.6}",
            s.p0, s.detections_per_frame, s.cloud_missing_rate, s.storm_missing_rate
        );
    }
    out
}

// ---------------------------------------------------------------------------
// Recall-precision over a parameter grid
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct PrSample {
    pub parameter: String,
    pub recall: f64,
    pub precision: f64,
    pub boxes: usize,
}

/// Storm recall and precision per parameter setting. Precision is the
/// fraction of emitted boxes containing at least one storm active at the
/// box's frame time; with no boxes it is reported as 1.0 (at zero recall) so
/// curve endpoints stay well defined.
pub fn precision_recall(
    outputs: &[(String, Vec<Detection>)],
    storms: &[StormEvent],
) -> Vec<PrSample> {
    outputs
        .iter()
        .map(|(parameter, detections)| {
            let recall = if storms.is_empty() { 1.0 } else { storm_recall(detections, storms) };
            let precision = if detections.is_empty() {
                1.0
            } else {
                let hits = detections
                    .iter()
                    .filter(|d| {
                        storms.iter().any(|s| {
                            s.active_at(d.timestamp) && d.bbox.contains(s.row, s.col)
                        })
                    })
                    .count();
                hits as f64 / detections.len() as f64
            };
            PrSample { parameter: parameter.clone(), recall, precision, boxes: detections.len() }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub cloud_recall: f64,
    pub storm_recall: f64,
    pub detections_per_frame: f64,
    pub frames: usize,
    pub labels: usize,
    pub storms: usize,
    pub curve: Vec<CurveSample>,
}

impl EvalReport {
    pub fn compute(
        detections: &[Detection],
        labels: &[LabeledCloud],
        storms: &[StormEvent],
        frame_count: usize,
    ) -> EvalReport {
        EvalReport {
            cloud_recall: cloud_recall(detections, labels),
            storm_recall: storm_recall(detections, storms),
            detections_per_frame: detections_per_frame(detections, frame_count),
            frames: frame_count,
            labels: labels.len(),
            storms: storms.len(),
            curve: Vec::new(),
        }
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "frames evaluated       {}", self.frames);
        let _ = writeln!(out, "labeled clouds         {}", self.labels);
        let _ = writeln!(out, "storm events           {}", self.storms);
        let _ = writeln!(out, "cloud recall (IoU>=.5) {:.4}", self.cloud_recall);
        let _ = writeln!(out, "storm recall           {:.4}", self.storm_recall);
        let _ = writeln!(out, "detections per frame   {:.4}", self.detections_per_frame);
        if !self.curve.is_empty() {
            let _ = writeln!(out, "cutoff curve:");
            let _ = writeln!(out, "  p0     det/frame  miss(clouds)  miss(storms)");
            for s in &self.curve {
                let _ = writeln!(
                    out,
                    "  {:.3}  {:9.4}  {:12.4}  {:12.4}",
                    s.p0, s.detections_per_frame, s.cloud_missing_rate, s.storm_missing_rate
                );
            }
        }
        out
    }
}

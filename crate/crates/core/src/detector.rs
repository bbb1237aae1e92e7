//! End-to-end per-frame detection: segment, propose, featurize, stack,
//! threshold, then non-maximum suppression.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{motion_histogram, segmented_hog};
use crate::imagery::{pgm, resize_bilinear, BBox, Frame, Timestamp, Validity};
use crate::learning::{adaboost_proba, stacked_input, ModelBundle};
use crate::motion::{motion_field, MotionField};
use crate::proposals::{propose_regions, WindowPyramid, PATCH_SIDE};

/// A scored bounding box emitted by the detector.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    pub proba: f64,
    pub timestamp: Timestamp,
}

/// Every cascade survivor of one frame with its stacked probability;
/// thresholding and suppression are applied on top of this.
#[derive(Debug, Clone)]
pub struct FrameScores {
    pub timestamp: Timestamp,
    pub candidates: Vec<Detection>,
}

impl FrameScores {
    /// Detections at cutoff `p0`: threshold, suppress, sort by descending
    /// probability.
    pub fn detections(&self, p0: f64, iou_max: f64) -> Vec<Detection> {
        let kept: Vec<Detection> =
            self.candidates.iter().filter(|d| d.proba >= p0).cloned().collect();
        nms(kept, iou_max)
    }
}

/// Stacked probability of one cascade-surviving window: segmented HOG plus
/// motion histogram through the 200 weak classifiers and the AdaBoost
/// stacker.
pub fn score_window(
    segmented: &Frame,
    motion: &MotionField,
    bbox: &BBox,
    bundle: &ModelBundle,
) -> Result<f64> {
    let patch = resize_bilinear(segmented, bbox, PATCH_SIDE)?;
    let hog = segmented_hog(&patch)?;
    let hist = motion_histogram(&motion.box_levels(bbox))?;
    let stacked = stacked_input(&bundle.weaks, &hog, &hist)?;
    Ok(adaboost_proba(&bundle.adaboost, &stacked))
}

/// Greedy non-maximum suppression: keep a box iff its IoU with every
/// already-kept box stays below `iou_max`. Candidates are visited by
/// descending probability; ties go to the top-left-most, then smaller box.
pub fn nms(mut detections: Vec<Detection>, iou_max: f64) -> Vec<Detection> {
    detections.sort_by(|a, b| {
        b.proba
            .partial_cmp(&a.proba)
            .expect("probabilities are finite")
            .then_with(|| a.bbox.cmp(&b.bbox))
    });
    let mut kept: Vec<Detection> = Vec::new();
    for candidate in detections {
        if kept.iter().all(|k| k.bbox.iou(&candidate.bbox) < iou_max) {
            kept.push(candidate);
        }
    }
    kept
}

/// Scores one frame given its trailing history (the last frame of `history`
/// is the frame to detect on). Needs enough history for the motion field;
/// invalid frames are rejected so callers can skip them with a diagnostic.
pub fn score_frame(history: &[Frame], bundle: &ModelBundle) -> Result<FrameScores> {
    let anchor = history
        .last()
        .ok_or_else(|| Error::Precondition("empty history".into()))?;
    if anchor.validity != Validity::Ok {
        return Err(Error::Precondition(format!(
            "frame {} is not valid for detection",
            anchor.timestamp
        )));
    }
    let motion = motion_field(history, bundle.displacement, bundle.span_hours)?;
    let segmented = crate::segmentation::segment_frame(anchor, &bundle.bank, bundle.sigma)?;
    let pyramid = WindowPyramid::default();
    let survivors = propose_regions(
        &segmented,
        &[],
        &pyramid,
        &bundle.patch,
        &bundle.template,
        &bundle.thresholds,
    );
    let mut candidates = Vec::with_capacity(survivors.len());
    for sample in survivors {
        let proba = score_window(&segmented, &motion, &sample.bbox, bundle)?;
        candidates.push(Detection { bbox: sample.bbox, proba, timestamp: anchor.timestamp });
    }
    Ok(FrameScores { timestamp: anchor.timestamp, candidates })
}

/// Full pipeline for one frame at cutoff `p0`, sorted by descending
/// probability with pairwise IoU below the bundle's suppression limit.
pub fn detect_frame(history: &[Frame], bundle: &ModelBundle, p0: f64) -> Result<Vec<Detection>> {
    if !(0.0..1.0).contains(&p0) || p0 <= 0.0 {
        return Err(Error::Precondition(format!("p0 must lie in (0, 1), got {p0}")));
    }
    Ok(score_frame(history, bundle)?.detections(p0, bundle.nms_iou))
}

// ---------------------------------------------------------------------------
// Detection CSV and overlays
// ---------------------------------------------------------------------------

/// `timestamp,x0,y0,side,p` with a header row.
pub fn detections_to_csv(detections: &[Detection]) -> String {
    let mut out = String::from("timestamp,x0,y0,side,p\n");
    for d in detections {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.6}",
            d.timestamp.to_iso(),
            d.bbox.x0,
            d.bbox.y0,
            d.bbox.side,
            d.proba
        );
    }
    out
}

pub fn detections_from_csv(text: &str) -> Result<Vec<Detection>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "timestamp,x0,y0,side,p" => {}
        other => return Err(Error::Format(format!("bad detections header {other:?}"))),
    }
    let mut out = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Format(format!("bad detections row {line:?}")));
        }
        let parse_u32 = |t: &str| -> Result<u32> {
            t.parse().map_err(|_| Error::Format(format!("bad integer {t:?}")))
        };
        out.push(Detection {
            timestamp: Timestamp::parse_iso(fields[0])?,
            bbox: BBox {
                x0: parse_u32(fields[1])?,
                y0: parse_u32(fields[2])?,
                side: parse_u32(fields[3])?,
            },
            proba: fields[4]
                .parse()
                .map_err(|_| Error::Format(format!("bad probability {:?}", fields[4])))?,
        });
    }
    Ok(out)
}

/// Writes the frame with detection rectangles burned in at intensity 255.
pub fn write_overlay(frame: &Frame, detections: &[Detection], path: &Path) -> Result<()> {
    let (w, h) = (frame.width(), frame.height());
    let mut pixels = frame.pixels().to_vec();
    for d in detections {
        let x0 = d.bbox.x0 as usize;
        let y0 = d.bbox.y0 as usize;
        let x1 = (x0 + d.bbox.side as usize - 1).min(w - 1);
        let y1 = (y0 + d.bbox.side as usize - 1).min(h - 1);
        for c in x0..=x1 {
            pixels[y0 * w + c] = 255;
            pixels[y1 * w + c] = 255;
        }
        for r in y0..=y1 {
            pixels[r * w + x0] = 255;
            pixels[r * w + x1] = 255;
        }
    }
    pgm::write_pgm(path, w, h, &pixels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn det(x0: u32, y0: u32, side: u32, proba: f64) -> Detection {
        Detection { bbox: BBox { x0, y0, side }, proba, timestamp: Timestamp::from_minutes(0) }
    }

    #[test]
    fn nms_keeps_higher_probability_duplicate() {
        let kept = nms(vec![det(0, 0, 10, 0.8), det(0, 0, 10, 0.9)], 0.30);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].proba, 0.9);
    }

    #[test]
    fn nms_keeps_disjoint_boxes() {
        let kept = nms(vec![det(0, 0, 10, 0.8), det(100, 100, 10, 0.5)], 0.30);
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn nms_chain_keeps_ends() {
        // A overlaps B, B overlaps C, A and C are disjoint.
        let a = det(0, 0, 16, 0.9);
        let b = det(8, 0, 16, 0.8);
        let c = det(16, 0, 16, 0.7);
        assert!(a.bbox.iou(&b.bbox) >= 0.30);
        assert!(b.bbox.iou(&c.bbox) >= 0.30);
        assert!(a.bbox.iou(&c.bbox) < 0.30);
        let kept = nms(vec![a.clone(), b, c.clone()], 0.30);
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0].bbox, a.bbox);
        assert_eq!(kept[1].bbox, c.bbox);
    }

    #[test]
    fn nms_tie_break_is_deterministic() {
        let kept = nms(vec![det(5, 5, 10, 0.8), det(4, 5, 10, 0.8), det(5, 4, 10, 0.8)], 0.30);
        // Equal probabilities: the top-left-most box wins its cluster.
        assert_eq!(kept[0].bbox, BBox { x0: 5, y0: 4, side: 10 });
    }

    #[test]
    fn detections_csv_roundtrip() {
        let dets = vec![det(1, 2, 128, 0.8125), det(300, 40, 256, 0.503125)];
        let text = detections_to_csv(&dets);
        let back = detections_from_csv(&text).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].bbox, dets[0].bbox);
        assert!((back[1].proba - dets[1].proba).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn nms_output_pairwise_below_limit(
            raw in proptest::collection::vec((0u32..200, 0u32..200, 8u32..64, 0u32..1000), 1..40)
        ) {
            let candidates: Vec<Detection> = raw
                .into_iter()
                .map(|(x, y, s, p)| det(x, y, s, p as f64 / 1000.0))
                .collect();
            let kept = nms(candidates.clone(), 0.30);
            for i in 0..kept.len() {
                for j in i + 1..kept.len() {
                    prop_assert!(kept[i].bbox.iou(&kept[j].bbox) < 0.30);
                }
            }
            // Determinism.
            let again = nms(candidates.clone(), 0.30);
            prop_assert_eq!(kept.len(), again.len());
            for (a, b) in kept.iter().zip(&again) {
                prop_assert_eq!(&a.bbox, &b.bbox);
            }
            // Monotonicity: raising the cutoff only removes detections.
            let scores = FrameScores { timestamp: Timestamp::from_minutes(0), candidates };
            let low = scores.detections(0.3, 0.30);
            let high = scores.detections(0.6, 0.30);
            for d in &high {
                prop_assert!(low.iter().any(|k| k.bbox == d.bbox));
            }
        }
    }
}

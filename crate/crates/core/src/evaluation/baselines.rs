//! The two published storm-detection baselines and the 2-D Gaussian
//! bounding-box approximation shared by both.
//!
//! Intensity Threshold Detection boxes 4-connected regions of pixels at or
//! above a fixed level. Spatial-Intensity Threshold Detection clusters the
//! bright pixels under a weighted spatial/intensity cost. Either way,
//! clusters become square boxes from the cluster mean and the dominant
//! eigenvalue of its covariance, with the cluster count picked by the mean
//! silhouette coefficient.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::imagery::{BBox, Frame};
use crate::seeding::derive_seed;

/// Smallest emitted box side; covers degenerate single-pixel clusters.
pub const MIN_BOX_SIDE: u32 = 8;

/// Candidate cluster counts scored by silhouette.
pub const MAX_COMPONENTS: usize = 5;

/// Points sampled for the O(n^2) silhouette computation.
const SILHOUETTE_SAMPLE: usize = 512;

/// Points used for Lloyd iterations on very large clusters; assignments of
/// the full set still use the final centroids.
const KMEANS_SAMPLE: usize = 4096;

/// A bright pixel: grid position plus intensity.
#[derive(Debug, Clone, Copy)]
pub struct BrightPixel {
    pub row: u32,
    pub col: u32,
    pub intensity: u8,
}

/// All pixels with intensity at or above the threshold.
pub fn bright_support(frame: &Frame, threshold: u8) -> Vec<BrightPixel> {
    let mut out = Vec::new();
    for r in 0..frame.height() {
        let row = frame.row(r);
        for (c, &v) in row.iter().enumerate() {
            if v >= threshold {
                out.push(BrightPixel { row: r as u32, col: c as u32, intensity: v });
            }
        }
    }
    out
}

/// 4-connected components of the bright support, as index lists into it.
pub fn connected_components(frame: &Frame, threshold: u8) -> Vec<Vec<BrightPixel>> {
    let (w, h) = (frame.width(), frame.height());
    let mut mask = vec![false; w * h];
    for r in 0..h {
        for (c, &v) in frame.row(r).iter().enumerate() {
            mask[r * w + c] = v >= threshold;
        }
    }
    let mut seen = vec![false; w * h];
    let mut components = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask[start] || seen[start] {
            continue;
        }
        let mut component = Vec::new();
        seen[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (r, c) = (i / w, i % w);
            component.push(BrightPixel {
                row: r as u32,
                col: c as u32,
                intensity: frame.get(r, c),
            });
            let mut visit = |j: usize| {
                if mask[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if c + 1 < w {
                visit(i + 1);
            }
            if c > 0 {
                visit(i - 1);
            }
            if r + 1 < h {
                visit(i + w);
            }
            if r > 0 {
                visit(i - w);
            }
        }
        components.push(component);
    }
    components
}

/// Square box from a point cluster: center at the mean, side four times the
/// square root of the covariance's larger eigenvalue (two standard
/// deviations each way). Returns (center_row, center_col, side) before
/// integer clamping.
pub fn fit_box(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mean_r = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_c = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut srr, mut scc, mut src) = (0.0, 0.0, 0.0);
    for &(r, c) in points {
        let dr = r - mean_r;
        let dc = c - mean_c;
        srr += dr * dr;
        scc += dc * dc;
        src += dr * dc;
    }
    srr /= n;
    scc /= n;
    src /= n;
    // Larger eigenvalue of [[srr, src], [src, scc]].
    let trace_half = (srr + scc) / 2.0;
    let det = srr * scc - src * src;
    let lambda_max = trace_half + (trace_half * trace_half - det).max(0.0).sqrt();
    (mean_r, mean_c, 4.0 * lambda_max.max(0.0).sqrt())
}

fn clamp_box(center_row: f64, center_col: f64, side: f64, frame: &Frame) -> BBox {
    let side = (side.round() as i64).max(MIN_BOX_SIDE as i64) as u32;
    let x0 = (center_col - side as f64 / 2.0).round() as i64;
    let y0 = (center_row - side as f64 / 2.0).round() as i64;
    BBox::clamped(x0, y0, side, frame.width(), frame.height())
        .expect("positive side and frame dims")
}

/// Boxes for one pixel point set: k-means++ clusterings for k = 1..=5 are
/// scored by mean silhouette over a deterministic subsample, and each
/// cluster of the winner becomes a box. Fewer than two points yield a single
/// minimum-side box.
pub fn boxes_from_gmm2d(points: &[(f64, f64)], frame: &Frame, seed: u64) -> Vec<BBox> {
    if points.is_empty() {
        return Vec::new();
    }
    if points.len() < 2 {
        return vec![clamp_box(points[0].0, points[0].1, MIN_BOX_SIDE as f64, frame)];
    }
    let dist = |a: &(f64, f64), b: &(f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
    let best = best_clustering(points, &dist, seed);
    best.clusters
        .into_iter()
        .filter(|c| !c.is_empty())
        .map(|cluster| {
            let pts: Vec<(f64, f64)> = cluster.iter().map(|&i| points[i]).collect();
            let (cr, cc, side) = fit_box(&pts);
            clamp_box(cr, cc, side, frame)
        })
        .collect()
}

/// Intensity Threshold Detection: every 4-connected bright region becomes
/// one or more boxes through the 2-D Gaussian approximation.
pub fn baseline_intensity(frame: &Frame, threshold: u8, seed: u64) -> Vec<BBox> {
    let mut boxes = Vec::new();
    for (ci, component) in connected_components(frame, threshold).into_iter().enumerate() {
        let points: Vec<(f64, f64)> =
            component.iter().map(|p| (p.row as f64, p.col as f64)).collect();
        boxes.extend(boxes_from_gmm2d(&points, frame, derive_seed(seed, ci as u64)));
    }
    boxes
}

/// Spatial-Intensity Threshold Detection: bright pixels are clustered under
/// the cost `lambda * spatial distance + (1 - lambda) * intensity
/// difference`, the cluster count again chosen by mean silhouette, and each
/// cluster boxed.
pub fn baseline_spatial_intensity(
    frame: &Frame,
    threshold: u8,
    lambda: f64,
    seed: u64,
) -> Vec<BBox> {
    let support = bright_support(frame, threshold);
    if support.is_empty() {
        return Vec::new();
    }
    if support.len() < 2 {
        return vec![clamp_box(
            support[0].row as f64,
            support[0].col as f64,
            MIN_BOX_SIDE as f64,
            frame,
        )];
    }
    let points: Vec<(f64, f64, f64)> = support
        .iter()
        .map(|p| (p.row as f64, p.col as f64, p.intensity as f64))
        .collect();
    let dist = move |a: &(f64, f64, f64), b: &(f64, f64, f64)| {
        let spatial = ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
        lambda * spatial + (1.0 - lambda) * (a.2 - b.2).abs()
    };
    let best = best_clustering(&points, &dist, seed);
    best.clusters
        .into_iter()
        .filter(|c| !c.is_empty())
        .map(|cluster| {
            let pts: Vec<(f64, f64)> = cluster.iter().map(|&i| (points[i].0, points[i].1)).collect();
            let (cr, cc, side) = fit_box(&pts);
            clamp_box(cr, cc, side, frame)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Generic k-means++ with silhouette model selection
// ---------------------------------------------------------------------------

struct Clustering {
    clusters: Vec<Vec<usize>>,
}

/// Centroid-based point for the metric space: anything we can average.
trait MeanPoint: Copy {
    fn zero() -> Self;
    fn add(self, other: Self) -> Self;
    fn scale(self, f: f64) -> Self;
}

impl MeanPoint for (f64, f64) {
    fn zero() -> Self {
        (0.0, 0.0)
    }
    fn add(self, o: Self) -> Self {
        (self.0 + o.0, self.1 + o.1)
    }
    fn scale(self, f: f64) -> Self {
        (self.0 * f, self.1 * f)
    }
}

impl MeanPoint for (f64, f64, f64) {
    fn zero() -> Self {
        (0.0, 0.0, 0.0)
    }
    fn add(self, o: Self) -> Self {
        (self.0 + o.0, self.1 + o.1, self.2 + o.2)
    }
    fn scale(self, f: f64) -> Self {
        (self.0 * f, self.1 * f, self.2 * f)
    }
}

/// Runs k-means++ for each candidate k, scores by mean silhouette (k = 1
/// scores the neutral 0.5, so multi-cluster structure must beat that), and
/// returns the winner; ties prefer fewer clusters.
fn best_clustering<P: MeanPoint>(
    points: &[P],
    dist: &impl Fn(&P, &P) -> f64,
    seed: u64,
) -> Clustering {
    let n = points.len();
    let mut best_k = 1;
    let mut best_score = 0.5;
    let mut best_assign: Vec<usize> = vec![0; n];
    let k_max = MAX_COMPONENTS.min(n);
    for k in 2..=k_max {
        let assign = kmeans(points, k, dist, derive_seed(seed, k as u64));
        let score = mean_silhouette(points, &assign, k, dist, derive_seed(seed, 100 + k as u64));
        if score > best_score {
            best_score = score;
            best_k = k;
            best_assign = assign;
        }
    }
    let mut clusters = vec![Vec::new(); best_k];
    for (i, &a) in best_assign.iter().enumerate() {
        clusters[a].push(i);
    }
    Clustering { clusters }
}

fn kmeans<P: MeanPoint>(points: &[P], k: usize, dist: &impl Fn(&P, &P) -> f64, seed: u64) -> Vec<usize> {
    let n = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Lloyd iterations run on a subsample when the support is huge; the
    // final assignment always covers every point.
    let work: Vec<usize> = if n > KMEANS_SAMPLE {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        idx.truncate(KMEANS_SAMPLE);
        idx.sort_unstable();
        idx
    } else {
        (0..n).collect()
    };

    // k-means++ seeding over the working set.
    let mut centers: Vec<P> = Vec::with_capacity(k);
    centers.push(points[work[rng.gen_range(0..work.len())]]);
    let mut d2: Vec<f64> = work.iter().map(|&i| dist(&points[i], &centers[0]).powi(2)).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let chosen = if total <= 0.0 {
            points[work[rng.gen_range(0..work.len())]]
        } else {
            let mut target = rng.gen_range(0.0..total);
            let mut pick = work[work.len() - 1];
            for (j, &w) in d2.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    pick = work[j];
                    break;
                }
            }
            points[pick]
        };
        centers.push(chosen);
        for (j, &i) in work.iter().enumerate() {
            let nd = dist(&points[i], centers.last().unwrap()).powi(2);
            if nd < d2[j] {
                d2[j] = nd;
            }
        }
    }

    let assign_to = |centers: &[P], i: usize| -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, center) in centers.iter().enumerate() {
            let d = dist(&points[i], center);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        best
    };

    let mut work_assign = vec![0usize; work.len()];
    for _ in 0..25 {
        let mut changed = false;
        for (j, &i) in work.iter().enumerate() {
            let a = assign_to(&centers, i);
            if work_assign[j] != a {
                work_assign[j] = a;
                changed = true;
            }
        }
        let mut sums = vec![P::zero(); k];
        let mut counts = vec![0usize; k];
        for (j, &i) in work.iter().enumerate() {
            sums[work_assign[j]] = sums[work_assign[j]].add(points[i]);
            counts[work_assign[j]] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].scale(1.0 / counts[c] as f64);
            }
        }
        if !changed {
            break;
        }
    }
    (0..n).map(|i| assign_to(&centers, i)).collect()
}

/// Mean silhouette over a stratified subsample (at least one point per
/// non-empty cluster). Singleton clusters contribute 0.
fn mean_silhouette<P: MeanPoint>(
    points: &[P],
    assign: &[usize],
    k: usize,
    dist: &impl Fn(&P, &P) -> f64,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_cluster: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &a) in assign.iter().enumerate() {
        by_cluster[a].push(i);
    }
    let occupied = by_cluster.iter().filter(|c| !c.is_empty()).count();
    if occupied < 2 {
        return -1.0;
    }
    // Proportional sample per cluster, at least one point each.
    let n: usize = assign.len();
    let mut sample: Vec<usize> = Vec::new();
    for members in by_cluster.iter().filter(|c| !c.is_empty()) {
        let share = ((members.len() * SILHOUETTE_SAMPLE) / n).clamp(1, members.len());
        let mut idx = members.clone();
        idx.shuffle(&mut rng);
        idx.truncate(share);
        sample.extend(idx);
    }
    sample.sort_unstable();

    let mut total = 0.0;
    for &i in &sample {
        let own = assign[i];
        if by_cluster[own].len() < 2 {
            continue; // silhouette of a singleton is 0
        }
        let mut mean_to = vec![0.0f64; k];
        let mut counts = vec![0usize; k];
        for &j in &sample {
            if j == i {
                continue;
            }
            mean_to[assign[j]] += dist(&points[i], &points[j]);
            counts[assign[j]] += 1;
        }
        // Within-cluster distance falls back to the full members when the
        // sample contains no peer.
        let a = if counts[own] > 0 {
            mean_to[own] / counts[own] as f64
        } else {
            let peers = &by_cluster[own];
            let s: f64 = peers.iter().filter(|&&j| j != i).map(|&j| dist(&points[i], &points[j])).sum();
            s / (peers.len() - 1) as f64
        };
        let b = (0..k)
            .filter(|&c| c != own && counts[c] > 0)
            .map(|c| mean_to[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if b.is_finite() {
            total += (b - a) / a.max(b);
        }
    }
    total / sample.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagery::Timestamp;

    fn frame_with_squares(squares: &[(usize, usize, usize, u8)]) -> Frame {
        let (w, h) = (256, 192);
        let mut px = vec![30u8; w * h];
        // mild texture so validity is ok
        for (i, p) in px.iter_mut().enumerate() {
            if i % 5 == 0 {
                *p += 20;
            }
        }
        for &(r0, c0, side, level) in squares {
            for r in r0..r0 + side {
                for c in c0..c0 + side {
                    px[r * w + c] = level;
                }
            }
        }
        Frame::new(w, h, px, Timestamp::from_minutes(0)).unwrap()
    }

    #[test]
    fn all_dark_frame_yields_nothing() {
        let frame = frame_with_squares(&[]);
        assert!(baseline_intensity(&frame, 210, 1).is_empty());
        assert!(baseline_spatial_intensity(&frame, 225, 0.7, 1).is_empty());
    }

    #[test]
    fn solid_square_becomes_one_centered_box() {
        let frame = frame_with_squares(&[(60, 100, 40, 230)]);
        let boxes = baseline_intensity(&frame, 210, 3);
        assert_eq!(boxes.len(), 1, "{boxes:?}");
        let b = boxes[0];
        let center_c = b.x0 as f64 + b.side as f64 / 2.0;
        let center_r = b.y0 as f64 + b.side as f64 / 2.0;
        assert!((center_r - 80.0).abs() <= 1.0, "{b:?}");
        assert!((center_c - 120.0).abs() <= 1.0, "{b:?}");
        // Uniform square of side s has eigenvalue close to s^2/12, so the
        // fitted side is near 1.155 s. A discrete 40-pixel square lands
        // within 15%.
        assert!((b.side as f64 - 1.1547 * 40.0).abs() <= 0.15 * 1.1547 * 40.0, "{b:?}");
    }

    #[test]
    fn two_distant_squares_become_two_boxes() {
        let frame = frame_with_squares(&[(30, 30, 24, 235), (130, 190, 24, 235)]);
        let boxes = baseline_intensity(&frame, 210, 5);
        assert_eq!(boxes.len(), 2, "{boxes:?}");
    }

    #[test]
    fn merged_blob_is_split_by_silhouette() {
        // One connected component shaped as two dense blobs joined by a thin
        // bridge: the per-component clustering should split it.
        let (w, h) = (256, 128);
        let mut px = vec![20u8; w * h];
        for r in 40..80 {
            for c in 30..70 {
                px[r * w + c] = 240;
            }
        }
        for r in 40..80 {
            for c in 180..220 {
                px[r * w + c] = 240;
            }
        }
        for c in 70..180 {
            px[60 * w + c] = 240;
        }
        let frame = Frame::new(w, h, px, Timestamp::from_minutes(0)).unwrap();
        let components = connected_components(&frame, 210);
        assert_eq!(components.len(), 1);
        let boxes = baseline_intensity(&frame, 210, 11);
        assert!(boxes.len() >= 2, "{boxes:?}");
    }

    #[test]
    fn support_shrinks_with_threshold() {
        let frame = frame_with_squares(&[(60, 100, 40, 220), (10, 10, 10, 240)]);
        let low = bright_support(&frame, 210);
        let high = bright_support(&frame, 230);
        assert!(high.len() < low.len());
        let in_low = |p: &BrightPixel| low.iter().any(|q| q.row == p.row && q.col == p.col);
        assert!(high.iter().all(in_low));
    }

    #[test]
    fn spatial_intensity_lambda_extremes() {
        // Two squares, same brightness, far apart: pure spatial clustering
        // separates them.
        let frame = frame_with_squares(&[(30, 30, 20, 240), (130, 190, 20, 240)]);
        let boxes = baseline_spatial_intensity(&frame, 225, 1.0, 7);
        assert_eq!(boxes.len(), 2, "{boxes:?}");
        // Different brightness, lambda weighting both: still two clusters.
        let frame = frame_with_squares(&[(30, 30, 20, 232), (130, 190, 20, 252)]);
        let boxes = baseline_spatial_intensity(&frame, 225, 0.7, 7);
        assert_eq!(boxes.len(), 2, "{boxes:?}");
    }

    #[test]
    fn fit_box_translation_equivariance() {
        let pts: Vec<(f64, f64)> = (0..200)
            .map(|i| (((i * 37) % 50) as f64, ((i * 61) % 80) as f64))
            .collect();
        let (r, c, side) = fit_box(&pts);
        let shifted: Vec<(f64, f64)> = pts.iter().map(|&(a, b)| (a + 17.0, b + 23.0)).collect();
        let (r2, c2, side2) = fit_box(&shifted);
        assert!((r2 - r - 17.0).abs() < 1e-9);
        assert!((c2 - c - 23.0).abs() < 1e-9);
        assert!((side2 - side).abs() < 1e-9);
    }

    #[test]
    fn colinear_points_produce_finite_box() {
        let pts: Vec<(f64, f64)> = (0..60).map(|i| (10.0, i as f64)).collect();
        let (_, _, side) = fit_box(&pts);
        assert!(side.is_finite() && side > 0.0);
        let frame = frame_with_squares(&[]);
        let boxes = boxes_from_gmm2d(&pts, &frame, 3);
        assert!(!boxes.is_empty());
    }

    #[test]
    fn degenerate_input_gets_minimum_box() {
        let frame = frame_with_squares(&[]);
        let boxes = boxes_from_gmm2d(&[(50.0, 50.0)], &frame, 1);
        assert_eq!(boxes.len(), 1);
        assert_eq!(boxes[0].side, MIN_BOX_SIDE);
    }
}

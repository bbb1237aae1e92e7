//! Motion-prior correlation and the two-frame cross-correlation baseline.
//!
//! The motion correlation of a pixel is the Pearson correlation between its
//! intensity history and the history of a displaced pixel over a fixed time
//! span: the same cloud seen at two spatiotemporal points correlates
//! strongly when the displacement matches the cloud motion. The classical
//! cross-correlation instead compares a spatial neighborhood across just two
//! successive frames.

use crate::error::{Error, Result};
use crate::imagery::{BBox, Frame, Timestamp, Validity};

/// Fixed displacement used by the detection pipeline: 10 pixels due west
/// (negative column direction), matching eastward cloud motion sampled
/// backward in time.
pub const DEFAULT_DISPLACEMENT: (i32, i32) = (0, -10);

/// Time span of the motion correlation window, hours.
pub const DEFAULT_SPAN_HOURS: f64 = 5.0;

/// Neutral renormalized level for pixels with undefined correlation.
pub const UNDEFINED_LEVEL: u8 = 128;

/// Per-pixel motion correlation for one anchor frame. Raw values lie in
/// [-1, 1]; pixels with insufficient data or zero variance are undefined and
/// map to the neutral level 128 after renormalization.
#[derive(Debug, Clone)]
pub struct MotionField {
    width: usize,
    height: usize,
    raw: Vec<f32>,
    defined: Vec<bool>,
    pub timestamp: Timestamp,
    pub displacement: (i32, i32),
    pub span_hours: f64,
}

impl MotionField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Raw correlation at a pixel, `None` where undefined.
    pub fn raw(&self, row: usize, col: usize) -> Option<f32> {
        let i = row * self.width + col;
        self.defined[i].then(|| self.raw[i])
    }

    /// Renormalized level at a pixel: -1 maps to 0, +1 to 255 (round half
    /// up), undefined to 128.
    pub fn level(&self, row: usize, col: usize) -> u8 {
        match self.raw(row, col) {
            Some(v) => renormalize(v as f64),
            None => UNDEFINED_LEVEL,
        }
    }

    /// The whole field as renormalized levels, row-major.
    pub fn levels(&self) -> Vec<u8> {
        (0..self.height * self.width)
            .map(|i| {
                if self.defined[i] {
                    renormalize(self.raw[i] as f64)
                } else {
                    UNDEFINED_LEVEL
                }
            })
            .collect()
    }

    /// Renormalized levels restricted to a box, row-major within the box.
    pub fn box_levels(&self, bbox: &BBox) -> Vec<u8> {
        let mut out = Vec::with_capacity((bbox.side * bbox.side) as usize);
        for r in bbox.y0..bbox.y0 + bbox.side {
            for c in bbox.x0..bbox.x0 + bbox.side {
                out.push(self.level(r as usize, c as usize));
            }
        }
        out
    }

    /// Renormalized field as a frame, writable as a P5 graymap.
    pub fn to_frame(&self) -> Frame {
        Frame::new(self.width, self.height, self.levels(), self.timestamp)
            .expect("field dimensions are valid")
    }
}

/// Affine renormalization of a correlation onto [0, 255]: -1 maps to 0 and
/// +1 to 255, rounding half up.
pub fn renormalize(corr: f64) -> u8 {
    (((corr + 1.0) / 2.0 * 255.0).round().clamp(0.0, 255.0)) as u8
}

/// Frames of `frames` whose timestamp lies in `(t - span, t]` where `t` is
/// the last frame's timestamp; invalid frames are skipped.
fn frames_in_span(frames: &[Frame], span_hours: f64) -> Result<Vec<&Frame>> {
    let anchor = frames
        .last()
        .ok_or_else(|| Error::Precondition("empty frame list".into()))?;
    let t = anchor.timestamp;
    let span_minutes = (span_hours * 60.0).round() as i64;
    let usable: Vec<&Frame> = frames
        .iter()
        .filter(|f| {
            f.validity == Validity::Ok
                && f.timestamp <= t
                && t.minutes_since(f.timestamp) < span_minutes
        })
        .collect();
    if usable.len() < 3 {
        return Err(Error::InsufficientHistory(format!(
            "need at least 3 usable frames in ({} - {span_hours}h, {}], have {}",
            t, t, usable.len()
        )));
    }
    Ok(usable)
}

/// Pearson correlation between the intensity series at `(row, col)` and at
/// the displaced pixel, over the frames inside the span ending at the last
/// frame. Returns `Ok(None)` when either series has zero variance.
pub fn motion_correlation(
    frames: &[Frame],
    row: usize,
    col: usize,
    displacement: (i32, i32),
    span_hours: f64,
) -> Result<Option<f64>> {
    let usable = frames_in_span(frames, span_hours)?;
    let (h, w) = (usable[0].height(), usable[0].width());
    let r2 = row as i64 + displacement.0 as i64;
    let c2 = col as i64 + displacement.1 as i64;
    if row >= h || col >= w || r2 < 0 || c2 < 0 || r2 >= h as i64 || c2 >= w as i64 {
        return Err(Error::Precondition(format!(
            "pixel ({row}, {col}) or its displacement outside {w}x{h} frame"
        )));
    }
    let series_a: Vec<f64> = usable.iter().map(|f| f.get(row, col) as f64).collect();
    let series_b: Vec<f64> = usable
        .iter()
        .map(|f| f.get(r2 as usize, c2 as usize) as f64)
        .collect();
    Ok(pearson(&series_a, &series_b))
}

/// Eq.-style two-frame baseline: Pearson correlation over the spatial
/// neighborhood `|x1 - x|_inf <= radius` between the previous frame at `x1`
/// and the current frame at `x1 + displacement`, both clipped to the frame.
pub fn cross_correlation(
    frame_prev: &Frame,
    frame_now: &Frame,
    row: usize,
    col: usize,
    displacement: (i32, i32),
    radius: usize,
) -> Result<Option<f64>> {
    if frame_prev.validity != Validity::Ok || frame_now.validity != Validity::Ok {
        return Err(Error::Precondition("both frames must be valid".into()));
    }
    let (h, w) = (frame_prev.height(), frame_prev.width());
    let mut series_a = Vec::new();
    let mut series_b = Vec::new();
    let r0 = row.saturating_sub(radius);
    let r1 = (row + radius).min(h - 1);
    let c0 = col.saturating_sub(radius);
    let c1 = (col + radius).min(w - 1);
    for r in r0..=r1 {
        for c in c0..=c1 {
            let rb = r as i64 + displacement.0 as i64;
            let cb = c as i64 + displacement.1 as i64;
            if rb < 0 || cb < 0 || rb >= h as i64 || cb >= w as i64 {
                continue;
            }
            series_a.push(frame_prev.get(r, c) as f64);
            series_b.push(frame_now.get(rb as usize, cb as usize) as f64);
        }
    }
    if series_a.is_empty() {
        return Err(Error::Precondition("empty neighborhood".into()));
    }
    Ok(pearson(&series_a, &series_b))
}

/// Computes the full motion-correlation field for the anchor (last) frame.
///
/// Per-pixel sums are accumulated in exact integer arithmetic, one pass per
/// frame in the span, so the result is independent of scheduling and cheap
/// enough to evaluate for every frame of a sequence.
pub fn motion_field(
    frames: &[Frame],
    displacement: (i32, i32),
    span_hours: f64,
) -> Result<MotionField> {
    let usable = frames_in_span(frames, span_hours)?;
    let anchor = *usable.last().unwrap();
    let (h, w) = (anchor.height(), anchor.width());
    let n_px = w * h;
    let n = usable.len() as u64;

    let mut sum_a = vec![0u32; n_px];
    let mut sum_b = vec![0u32; n_px];
    let mut sum_a2 = vec![0u32; n_px];
    let mut sum_b2 = vec![0u32; n_px];
    let mut sum_ab = vec![0u32; n_px];
    debug_assert!(n <= 60, "u32 accumulators assume a modest span");

    let (dr, dc) = (displacement.0 as i64, displacement.1 as i64);
    // Rows/cols for which the displaced pixel stays inside the frame.
    let row_lo = (-dr).max(0) as usize;
    let row_hi = ((h as i64 - dr).min(h as i64)) as usize;
    let col_lo = (-dc).max(0) as usize;
    let col_hi = ((w as i64 - dc).min(w as i64)) as usize;

    for frame in &usable {
        for r in row_lo..row_hi {
            let src = frame.row(r);
            let dst = frame.row((r as i64 + dr) as usize);
            let base = r * w;
            for c in col_lo..col_hi {
                let a = src[c] as u32;
                let b = dst[(c as i64 + dc) as usize] as u32;
                let i = base + c;
                sum_a[i] += a;
                sum_b[i] += b;
                sum_a2[i] += a * a;
                sum_b2[i] += b * b;
                sum_ab[i] += a * b;
            }
        }
    }

    let mut raw = vec![0f32; n_px];
    let mut defined = vec![false; n_px];
    for r in row_lo..row_hi {
        for c in col_lo..col_hi {
            let i = r * w + c;
            let nf = n as f64;
            let var_a = nf * sum_a2[i] as f64 - (sum_a[i] as f64) * (sum_a[i] as f64);
            let var_b = nf * sum_b2[i] as f64 - (sum_b[i] as f64) * (sum_b[i] as f64);
            if var_a > 0.0 && var_b > 0.0 {
                let cov = nf * sum_ab[i] as f64 - (sum_a[i] as f64) * (sum_b[i] as f64);
                raw[i] = (cov / (var_a * var_b).sqrt()).clamp(-1.0, 1.0) as f32;
                defined[i] = true;
            }
        }
    }

    Ok(MotionField {
        width: w,
        height: h,
        raw,
        defined,
        timestamp: anchor.timestamp,
        displacement,
        span_hours,
    })
}

/// Plain Pearson correlation; `None` when either series is constant.
fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let da = x - mean_a;
        let db = y - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if var_a <= 0.0 || var_b <= 0.0 {
        return None;
    }
    Some((cov / (var_a * var_b).sqrt()).clamp(-1.0, 1.0))
}

//! Frame and annotation data model, geometric primitives, preprocessing.
//!
//! Everything here is immutable after construction and safe to share across
//! parallel workers.

mod annotations;
pub mod pgm;

pub use annotations::{
    read_labels_csv, read_storms_csv, write_labels_csv, write_storms_csv, LabeledCloud,
    StormEvent, STORM_KINDS,
};
pub use pgm::{list_frame_files, load_frame, save_frame};

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};

use crate::error::{Error, Result};

/// Standard deviation below which a frame is flagged as corrupt; stands in
/// for the "abnormally low contrast" screen applied to the source archive.
pub const CONTRAST_FLOOR: f64 = 8.0;

// ---------------------------------------------------------------------------
// Timestamp
// ---------------------------------------------------------------------------

/// UTC instant quantized to minutes (the archive indexes frames by minute).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(i64);

impl Timestamp {
    pub fn from_minutes(minutes_since_epoch: i64) -> Self {
        Timestamp(minutes_since_epoch)
    }

    pub fn from_ymd_hm(year: i32, month: u32, day: u32, hour: u32, minute: u32) -> Option<Self> {
        let date = NaiveDate::from_ymd_opt(year, month, day)?;
        let dt = date.and_hms_opt(hour, minute, 0)?;
        Some(Timestamp(dt.and_utc().timestamp() / 60))
    }

    pub fn minutes(&self) -> i64 {
        self.0
    }

    /// Hour of day in [0, 24).
    pub fn hour(&self) -> u8 {
        self.naive().hour() as u8
    }

    pub fn add_minutes(&self, delta: i64) -> Self {
        Timestamp(self.0 + delta)
    }

    /// Whole minutes from `earlier` to `self`.
    pub fn minutes_since(&self, earlier: Timestamp) -> i64 {
        self.0 - earlier.0
    }

    /// Day index relative to the epoch; used for temporal data partitions.
    pub fn day_index(&self) -> i64 {
        self.0.div_euclid(24 * 60)
    }

    fn naive(&self) -> NaiveDateTime {
        chrono::DateTime::from_timestamp(self.0 * 60, 0)
            .expect("minute timestamp in range")
            .naive_utc()
    }

    /// `YYYYMMDD_HHMM`, the frame file-name stem.
    pub fn file_stem(&self) -> String {
        let dt = self.naive();
        format!(
            "{:04}{:02}{:02}_{:02}{:02}",
            dt.year(),
            dt.month(),
            dt.day(),
            dt.hour(),
            dt.minute()
        )
    }

    pub fn parse_file_stem(stem: &str) -> Result<Self> {
        let bytes = stem.as_bytes();
        if bytes.len() != 13 || bytes[8] != b'_' || !bytes.iter().enumerate().all(|(i, b)| i == 8 || b.is_ascii_digit()) {
            return Err(Error::Name(format!(
                "expected YYYYMMDD_HHMM, got {stem:?}"
            )));
        }
        let num = |range: std::ops::Range<usize>| -> i64 { stem[range].parse().unwrap() };
        let (y, mo, d) = (num(0..4) as i32, num(4..6) as u32, num(6..8) as u32);
        let (h, mi) = (num(9..11) as u32, num(11..13) as u32);
        Timestamp::from_ymd_hm(y, mo, d, h, mi)
            .ok_or_else(|| Error::Name(format!("invalid calendar time in {stem:?}")))
    }

    /// ISO-8601 to minute precision, `YYYY-MM-DDTHH:MM`.
    pub fn to_iso(&self) -> String {
        let dt = self.naive();
        format!(
            "{:04}-{:02}-{:02}T{:02}:{:02}",
            dt.year(),
            dt.month(),
            dt.day(),
            dt.hour(),
            dt.minute()
        )
    }

    pub fn parse_iso(text: &str) -> Result<Self> {
        let dt = NaiveDateTime::parse_from_str(text, "%Y-%m-%dT%H:%M")
            .or_else(|_| NaiveDateTime::parse_from_str(text, "%Y-%m-%dT%H:%M:%S"))
            .map_err(|e| Error::Format(format!("bad timestamp {text:?}: {e}")))?;
        Ok(Timestamp(dt.and_utc().timestamp() / 60))
    }
}

impl std::fmt::Display for Timestamp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.to_iso())
    }
}

// ---------------------------------------------------------------------------
// Frame
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Validity {
    Ok,
    Missing,
    CorruptLowContrast,
}

/// One grayscale satellite image with timestamp and validity flag.
///
/// Pixels are row-major `u8` intensities; row 0 is the northern edge.
#[derive(Debug, Clone)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
    pub timestamp: Timestamp,
    pub validity: Validity,
}

impl Frame {
    /// Builds a frame and computes its validity from the contrast floor.
    pub fn new(width: usize, height: usize, pixels: Vec<u8>, timestamp: Timestamp) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Precondition("frame dimensions must be positive".into()));
        }
        if pixels.len() != width * height {
            return Err(Error::Precondition(format!(
                "pixel count {} != {}x{}",
                pixels.len(),
                width,
                height
            )));
        }
        let mut frame = Frame { width, height, pixels, timestamp, validity: Validity::Ok };
        if frame.intensity_std() < CONTRAST_FLOOR {
            frame.validity = Validity::CorruptLowContrast;
        }
        Ok(frame)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    pub fn row(&self, row: usize) -> &[u8] {
        &self.pixels[row * self.width..(row + 1) * self.width]
    }

    pub fn intensity_std(&self) -> f64 {
        let n = self.pixels.len() as f64;
        let (mut sum, mut sum_sq) = (0u64, 0u64);
        for &p in &self.pixels {
            sum += p as u64;
            sum_sq += (p as u64) * (p as u64);
        }
        let mean = sum as f64 / n;
        (sum_sq as f64 / n - mean * mean).max(0.0).sqrt()
    }

    /// Summed-area table with a zero top row/left column; entry
    /// `(r+1)*(w+1)+(c+1)` holds the sum over pixels `[0..=r, 0..=c]`.
    pub fn integral(&self) -> IntegralImage {
        let (w, h) = (self.width, self.height);
        let mut table = vec![0u64; (w + 1) * (h + 1)];
        for r in 0..h {
            let mut row_sum = 0u64;
            for c in 0..w {
                row_sum += self.pixels[r * w + c] as u64;
                table[(r + 1) * (w + 1) + (c + 1)] = table[r * (w + 1) + (c + 1)] + row_sum;
            }
        }
        IntegralImage { width: w, table }
    }
}

/// Exact integer summed-area table over a frame.
pub struct IntegralImage {
    width: usize,
    table: Vec<u64>,
}

impl IntegralImage {
    /// Mean intensity over the box, exact in integer arithmetic.
    pub fn box_mean(&self, b: &BBox) -> f64 {
        let w1 = self.width + 1;
        let (x0, y0, side) = (b.x0 as usize, b.y0 as usize, b.side as usize);
        let (x1, y1) = (x0 + side, y0 + side);
        let sum = self.table[y1 * w1 + x1] + self.table[y0 * w1 + x0]
            - self.table[y0 * w1 + x1]
            - self.table[y1 * w1 + x0];
        sum as f64 / (side * side) as f64
    }
}

// ---------------------------------------------------------------------------
// BBox
// ---------------------------------------------------------------------------

/// Axis-aligned square region in pixel coordinates; the unit of labeling and
/// detection. `x0` is the column and `y0` the row of the top-left pixel; the
/// box covers pixels `[x0, x0+side) x [y0, y0+side)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BBox {
    pub y0: u32,
    pub x0: u32,
    pub side: u32,
}

impl BBox {
    /// Clamps the box inside a `frame_width x frame_height` grid. Labels that
    /// extend past the frame edge are shifted (and shrunk only if the side
    /// exceeds the frame itself), mirroring the annotation convention that
    /// keeps cloud heads and tails in the middle of the square.
    pub fn clamped(x0: i64, y0: i64, side: u32, frame_width: usize, frame_height: usize) -> Result<Self> {
        if side == 0 {
            return Err(Error::Precondition("box side must be positive".into()));
        }
        if frame_width == 0 || frame_height == 0 {
            return Err(Error::Precondition("frame dimensions must be positive".into()));
        }
        let side = side.min(frame_width as u32).min(frame_height as u32);
        let clamp_axis = |v: i64, extent: usize| -> u32 {
            v.clamp(0, extent as i64 - side as i64) as u32
        };
        Ok(BBox {
            x0: clamp_axis(x0, frame_width),
            y0: clamp_axis(y0, frame_height),
            side,
        })
    }

    pub fn area(&self) -> u64 {
        self.side as u64 * self.side as u64
    }

    /// Whether the pixel (row, col) lies inside the box (edges inclusive in
    /// pixel terms: the box covers `side` whole pixels per axis).
    pub fn contains(&self, row: u32, col: u32) -> bool {
        col >= self.x0 && col < self.x0 + self.side && row >= self.y0 && row < self.y0 + self.side
    }

    /// Intersection-over-union area ratio; 0 for disjoint, 1 for identical.
    pub fn iou(&self, other: &BBox) -> f64 {
        let ix = overlap(self.x0, self.x0 + self.side, other.x0, other.x0 + other.side);
        let iy = overlap(self.y0, self.y0 + self.side, other.y0, other.y0 + other.side);
        let inter = ix * iy;
        if inter == 0 {
            return 0.0;
        }
        let union = self.area() + other.area() - inter;
        inter as f64 / union as f64
    }
}

fn overlap(a0: u32, a1: u32, b0: u32, b1: u32) -> u64 {
    let lo = a0.max(b0);
    let hi = a1.min(b1);
    (hi.saturating_sub(lo)) as u64
}

/// Intersection-over-union of two boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    a.iou(b)
}

// ---------------------------------------------------------------------------
// Patch
// ---------------------------------------------------------------------------

/// Square grid of real-valued intensities in [0, 255], produced by resizing
/// a frame region. Kept in floating point so resampling does not quantize.
#[derive(Debug, Clone)]
pub struct Patch {
    pub side: usize,
    pub data: Vec<f32>,
}

impl Patch {
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.side + col]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }
}

/// Bilinear resize of a frame region to `out_side x out_side` with
/// corner-aligned sampling: output corners map exactly onto box corners.
pub fn resize_bilinear(frame: &Frame, bbox: &BBox, out_side: usize) -> Result<Patch> {
    if out_side == 0 {
        return Err(Error::Precondition("output side must be positive".into()));
    }
    if bbox.side == 0
        || (bbox.x0 + bbox.side) as usize > frame.width()
        || (bbox.y0 + bbox.side) as usize > frame.height()
    {
        return Err(Error::Precondition("box must lie inside the frame".into()));
    }
    let src = bbox.side as usize;
    let scale = if out_side > 1 {
        (src - 1) as f32 / (out_side - 1) as f32
    } else {
        0.0
    };
    let mut data = vec![0f32; out_side * out_side];
    for out_r in 0..out_side {
        let fy = out_r as f32 * scale;
        let y = (fy.floor() as usize).min(src - 1);
        let y1 = (y + 1).min(src - 1);
        let wy = fy - y as f32;
        for out_c in 0..out_side {
            let fx = out_c as f32 * scale;
            let x = (fx.floor() as usize).min(src - 1);
            let x1 = (x + 1).min(src - 1);
            let wx = fx - x as f32;
            let at = |r: usize, c: usize| -> f32 {
                frame.get(bbox.y0 as usize + r, bbox.x0 as usize + c) as f32
            };
            let top = at(y, x) * (1.0 - wx) + at(y, x1) * wx;
            let bot = at(y1, x) * (1.0 - wx) + at(y1, x1) * wx;
            data[out_r * out_side + out_c] = (top * (1.0 - wy) + bot * wy).clamp(0.0, 255.0);
        }
    }
    Ok(Patch { side: out_side, data })
}

// ---------------------------------------------------------------------------
// Histogram equalization
// ---------------------------------------------------------------------------

/// Cumulative-histogram remapping onto [0, 255]; a monotone non-decreasing
/// intensity transform. Frames with a single intensity level pass through
/// unchanged.
pub fn equalize_histogram(frame: &Frame) -> Result<Frame> {
    if frame.validity != Validity::Ok {
        return Err(Error::Precondition("frame validity must be ok".into()));
    }
    let mut hist = [0u64; 256];
    for &p in frame.pixels() {
        hist[p as usize] += 1;
    }
    let mut cdf = [0u64; 256];
    let mut acc = 0u64;
    for v in 0..256 {
        acc += hist[v];
        cdf[v] = acc;
    }
    let total = frame.pixels().len() as u64;
    let cdf_min = cdf.iter().copied().find(|&c| c > 0).unwrap_or(0);
    if cdf_min == total {
        return Frame::new(frame.width(), frame.height(), frame.pixels().to_vec(), frame.timestamp);
    }
    let mut lut = [0u8; 256];
    for v in 0..256 {
        let num = cdf[v].saturating_sub(cdf_min) as f64;
        let den = (total - cdf_min) as f64;
        lut[v] = (num / den * 255.0).round() as u8;
    }
    let pixels = frame.pixels().iter().map(|&p| lut[p as usize]).collect();
    Frame::new(frame.width(), frame.height(), pixels, frame.timestamp)
}

// ---------------------------------------------------------------------------
// Geolocation
// ---------------------------------------------------------------------------

/// Affine equirectangular map over the CONUS window: row 0 is 50N, the last
/// row 20N; column 0 is 120W, the last column 60W. Returns (latitude,
/// longitude) in signed degrees (west negative).
pub fn pixel_to_geo(row: usize, col: usize, width: usize, height: usize) -> Result<(f64, f64)> {
    if row >= height || col >= width {
        return Err(Error::Precondition(format!(
            "pixel ({row}, {col}) outside {width}x{height} frame"
        )));
    }
    let lat_span = 50.0 - 20.0;
    let lon_span = 120.0 - 60.0;
    let lat = if height > 1 { 50.0 - lat_span * row as f64 / (height - 1) as f64 } else { 50.0 };
    let lon = if width > 1 { -120.0 + lon_span * col as f64 / (width - 1) as f64 } else { -120.0 };
    Ok((lat, lon))
}

//! Window descriptors: segmented HOG (324-dim) and the motion histogram
//! (27-dim).
//!
//! HOG runs on the 256x256 resized segmented patch with 9 unsigned
//! orientation bins, 64x64-pixel cells, and 2x2-cell blocks sliding by one
//! cell; the motion histogram bins the renormalized motion-correlation
//! levels inside the window.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::imagery::{BBox, Patch, Timestamp};

/// Patch side expected by the HOG layout below.
pub const HOG_PATCH_SIDE: usize = 256;
/// Unsigned orientation bins over [0, 180) degrees.
pub const HOG_ORIENTATIONS: usize = 9;
/// Cell side in pixels (4x4 cells per patch).
pub const HOG_CELL_SIDE: usize = 64;
/// Cells per block edge; blocks slide by one cell (3x3 block grid).
pub const HOG_BLOCK_CELLS: usize = 2;
/// 3 * 3 blocks x 2 * 2 cells x 9 bins.
pub const HOG_DIM: usize = 324;

/// Histogram bins over the renormalized motion range [0, 255].
pub const MOTION_BINS: usize = 27;

const BLOCK_NORM_EPS: f32 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    SegmentedHog,
    MotionHistogram,
}

impl FeatureKind {
    pub fn dim(&self) -> usize {
        match self {
            FeatureKind::SegmentedHog => HOG_DIM,
            FeatureKind::MotionHistogram => MOTION_BINS,
        }
    }

    fn tag(&self) -> u8 {
        match self {
            FeatureKind::SegmentedHog => 0,
            FeatureKind::MotionHistogram => 1,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(FeatureKind::SegmentedHog),
            1 => Ok(FeatureKind::MotionHistogram),
            other => Err(Error::Format(format!("unknown feature kind tag {other}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FeatureVector {
    pub kind: FeatureKind,
    pub values: Vec<f32>,
}

/// HOG over a segmented 256x256 patch.
///
/// Gradients are clamped central differences; each pixel votes its gradient
/// magnitude into the two orientation bins nearest its unsigned angle with
/// linear interpolation, and every 2x2-cell block is L2-normalized.
pub fn segmented_hog(patch: &Patch) -> Result<FeatureVector> {
    if patch.side != HOG_PATCH_SIDE {
        return Err(Error::Precondition(format!(
            "hog expects a {HOG_PATCH_SIDE}x{HOG_PATCH_SIDE} patch, got side {}",
            patch.side
        )));
    }
    let side = patch.side;
    let cells = side / HOG_CELL_SIDE;
    let mut cell_hist = vec![0f32; cells * cells * HOG_ORIENTATIONS];

    for r in 0..side {
        let up = r.saturating_sub(1);
        let down = (r + 1).min(side - 1);
        let cell_row = (r / HOG_CELL_SIDE) * cells;
        for c in 0..side {
            let left = c.saturating_sub(1);
            let right = (c + 1).min(side - 1);
            let gx = patch.get(r, right) - patch.get(r, left);
            let gy = patch.get(down, c) - patch.get(up, c);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let deg = unsigned_orientation_deg(gx, gy);
            // Linear vote split between the two nearest bin centers.
            let pos = deg / 20.0 - 0.5;
            let lower = pos.floor();
            let frac = pos - lower;
            let bin0 = (lower as i32).rem_euclid(HOG_ORIENTATIONS as i32) as usize;
            let bin1 = (bin0 + 1) % HOG_ORIENTATIONS;
            let cell = cell_row + c / HOG_CELL_SIDE;
            cell_hist[cell * HOG_ORIENTATIONS + bin0] += mag * (1.0 - frac);
            cell_hist[cell * HOG_ORIENTATIONS + bin1] += mag * frac;
        }
    }

    let blocks = cells - HOG_BLOCK_CELLS + 1;
    let mut values = Vec::with_capacity(HOG_DIM);
    for br in 0..blocks {
        for bc in 0..blocks {
            let start = values.len();
            for cr in 0..HOG_BLOCK_CELLS {
                for cc in 0..HOG_BLOCK_CELLS {
                    let cell = (br + cr) * cells + (bc + cc);
                    values.extend_from_slice(
                        &cell_hist[cell * HOG_ORIENTATIONS..(cell + 1) * HOG_ORIENTATIONS],
                    );
                }
            }
            let norm_sq: f32 = values[start..].iter().map(|v| v * v).sum();
            let inv = 1.0 / (norm_sq + BLOCK_NORM_EPS).sqrt();
            for v in &mut values[start..] {
                *v *= inv;
            }
        }
    }
    debug_assert_eq!(values.len(), HOG_DIM);
    Ok(FeatureVector { kind: FeatureKind::SegmentedHog, values })
}

/// L1-normalized 27-bin histogram of renormalized motion levels inside a
/// window.
pub fn motion_histogram(levels: &[u8]) -> Result<FeatureVector> {
    if levels.is_empty() {
        return Err(Error::Precondition("empty box for motion histogram".into()));
    }
    let mut counts = [0u64; MOTION_BINS];
    for &v in levels {
        counts[v as usize * MOTION_BINS / 256] += 1;
    }
    let total = levels.len() as f32;
    let values = counts.iter().map(|&c| c as f32 / total).collect();
    Ok(FeatureVector { kind: FeatureKind::MotionHistogram, values })
}

// ---------------------------------------------------------------------------
// Binary feature dump
// ---------------------------------------------------------------------------

const FEATURE_MAGIC: &[u8; 4] = b"CSCF";
const FEATURE_VERSION: u8 = 1;

/// One dumped record: where the feature came from and its values.
#[derive(Debug, Clone)]
pub struct FeatureRecord {
    pub timestamp: Timestamp,
    pub bbox: BBox,
    pub feature: FeatureVector,
}

/// Writes a little-endian binary stream of feature records with a versioned
/// header.
pub fn write_feature_dump(mut out: impl Write, records: &[FeatureRecord]) -> Result<()> {
    out.write_all(FEATURE_MAGIC)?;
    out.write_all(&[FEATURE_VERSION])?;
    out.write_all(&(records.len() as u64).to_le_bytes())?;
    for rec in records {
        out.write_all(&rec.timestamp.minutes().to_le_bytes())?;
        out.write_all(&rec.bbox.x0.to_le_bytes())?;
        out.write_all(&rec.bbox.y0.to_le_bytes())?;
        out.write_all(&rec.bbox.side.to_le_bytes())?;
        out.write_all(&[rec.feature.kind.tag()])?;
        out.write_all(&(rec.feature.values.len() as u32).to_le_bytes())?;
        for v in &rec.feature.values {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_feature_dump(mut input: impl Read) -> Result<Vec<FeatureRecord>> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != FEATURE_MAGIC {
        return Err(Error::Format("bad feature dump magic".into()));
    }
    let mut version = [0u8; 1];
    input.read_exact(&mut version)?;
    if version[0] != FEATURE_VERSION {
        return Err(Error::Format(format!("unsupported feature dump version {}", version[0])));
    }
    let mut count_bytes = [0u8; 8];
    input.read_exact(&mut count_bytes)?;
    let count = u64::from_le_bytes(count_bytes) as usize;
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let mut i64b = [0u8; 8];
        input.read_exact(&mut i64b)?;
        let timestamp = Timestamp::from_minutes(i64::from_le_bytes(i64b));
        let mut u32b = [0u8; 4];
        input.read_exact(&mut u32b)?;
        let x0 = u32::from_le_bytes(u32b);
        input.read_exact(&mut u32b)?;
        let y0 = u32::from_le_bytes(u32b);
        input.read_exact(&mut u32b)?;
        let side = u32::from_le_bytes(u32b);
        let mut tag = [0u8; 1];
        input.read_exact(&mut tag)?;
        let kind = FeatureKind::from_tag(tag[0])?;
        input.read_exact(&mut u32b)?;
        let len = u32::from_le_bytes(u32b) as usize;
        let mut values = Vec::with_capacity(len);
        for _ in 0..len {
            input.read_exact(&mut u32b)?;
            values.push(f32::from_le_bytes(u32b));
        }
        records.push(FeatureRecord {
            timestamp,
            bbox: BBox { x0, y0, side },
            feature: FeatureVector { kind, values },
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn patch_from(f: impl Fn(usize, usize) -> f32) -> Patch {
        let side = HOG_PATCH_SIDE;
        let mut data = vec![0f32; side * side];
        for r in 0..side {
            for c in 0..side {
                data[r * side + c] = f(r, c);
            }
        }
        Patch { side, data }
    }

    #[test]
    fn constant_patch_gives_zero_descriptor() {
        let hog = segmented_hog(&patch_from(|_, _| 180.0)).unwrap();
        assert_eq!(hog.values.len(), HOG_DIM);
        assert!(hog.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vertical_edge_energy_lands_in_horizontal_gradient_bins() {
        // Step edge down the middle: gradient is horizontal (angle 0/180),
        // which splits between the first and last orientation bins.
        let hog = segmented_hog(&patch_from(|_, c| if c < 128 { 20.0 } else { 220.0 })).unwrap();
        let blocks = 3;
        for br in 0..blocks {
            // The edge column (128) lies in cells with column index 1 or 2,
            // so every block (each spans two cell columns) contains it.
            for bc in 0..blocks {
                let block =
                    &hog.values[(br * blocks + bc) * 36..(br * blocks + bc + 1) * 36];
                let total: f32 = block.iter().sum();
                assert!(total > 0.0, "block ({br},{bc}) saw no edge");
                let mut edge_mass = 0.0;
                for cell in 0..4 {
                    edge_mass += block[cell * 9] + block[cell * 9 + 8];
                }
                assert!(
                    edge_mass / total > 0.99,
                    "block ({br},{bc}): edge mass {edge_mass} of {total}"
                );
            }
        }
    }

    #[test]
    fn hog_dimension_is_fixed() {
        let hog = segmented_hog(&patch_from(|r, c| ((r * 7 + c * 13) % 251) as f32)).unwrap();
        assert_eq!(hog.values.len(), 324);
        let bad = Patch { side: 128, data: vec![0.0; 128 * 128] };
        assert!(segmented_hog(&bad).is_err());
    }

    #[test]
    fn motion_histogram_examples() {
        let all_neutral = motion_histogram(&vec![128u8; 400]).unwrap();
        assert_eq!(all_neutral.values.len(), MOTION_BINS);
        let nonzero: Vec<usize> = all_neutral
            .values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(nonzero, vec![13]); // 128 * 27 / 256
        assert_eq!(all_neutral.values[13], 1.0);

        let mut bilevel = vec![0u8; 100];
        bilevel.extend(vec![255u8; 100]);
        let hist = motion_histogram(&bilevel).unwrap();
        assert_eq!(hist.values[0], 0.5);
        assert_eq!(hist.values[26], 0.5);

        assert!(motion_histogram(&[]).is_err());
    }

    #[test]
    fn feature_dump_roundtrip() {
        let records = vec![
            FeatureRecord {
                timestamp: Timestamp::from_minutes(123456),
                bbox: BBox { x0: 10, y0: 20, side: 128 },
                feature: motion_histogram(&[0, 50, 100, 150, 200, 250]).unwrap(),
            },
            FeatureRecord {
                timestamp: Timestamp::from_minutes(123486),
                bbox: BBox { x0: 0, y0: 0, side: 256 },
                feature: segmented_hog(&patch_from(|r, c| (r as f32 - c as f32).abs())).unwrap(),
            },
        ];
        let mut buf = Vec::new();
        write_feature_dump(&mut buf, &records).unwrap();
        let back = read_feature_dump(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].bbox, records[0].bbox);
        assert_eq!(back[0].feature.values, records[0].feature.values);
        assert_eq!(back[1].feature.values, records[1].feature.values);
        assert!(matches!(back[1].feature.kind, FeatureKind::SegmentedHog));
    }

    proptest! {
        #[test]
        fn hog_invariant_under_constant_shift(offset in 0.0f32..50.0, seed in any::<u64>()) {
            let mut state = seed | 1;
            let mut next = move || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 40) % 200) as f32
            };
            let mut base = vec![0f32; HOG_PATCH_SIDE * HOG_PATCH_SIDE];
            for v in base.iter_mut() {
                *v = next();
            }
            let a = Patch { side: HOG_PATCH_SIDE, data: base.clone() };
            let shifted: Vec<f32> = base.iter().map(|&v| v + offset).collect();
            let b = Patch { side: HOG_PATCH_SIDE, data: shifted };
            let ha = segmented_hog(&a).unwrap();
            let hb = segmented_hog(&b).unwrap();
            for (x, y) in ha.values.iter().zip(&hb.values) {
                prop_assert!((x - y).abs() < 1e-4);
            }
            // Block norms stay below 1 + epsilon slack.
            for block in ha.values.chunks(36) {
                let norm: f32 = block.iter().map(|v| v * v).sum::<f32>().sqrt();
                prop_assert!(norm <= 1.0 + 1e-3);
            }
        }

        #[test]
        fn motion_histogram_is_permutation_invariant(values in proptest::collection::vec(0u8..=255, 16..200)) {
            let hist = motion_histogram(&values).unwrap();
            let mut sorted = values.clone();
            sorted.sort_unstable();
            let hist2 = motion_histogram(&sorted).unwrap();
            prop_assert_eq!(&hist.values, &hist2.values);
            let sum: f32 = hist.values.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-6);
            prop_assert!(hist.values.iter().all(|&v| v >= 0.0));
        }
    }
}

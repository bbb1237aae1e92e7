//! High-cloud segmentation.
//!
//! Pixels are grouped by (hour of day, 32x32 tile) and each group is modeled
//! by a Gaussian mixture whose component count (2 or 3) is selected by AIC.
//! The component with the largest mean models high cloud; a pixel's
//! segmented intensity is its raw intensity weighted by the posterior of
//! that component, cut to zero below a threshold. A min-max filter smooths
//! the high-cloud means across neighboring groups before segmentation.

mod bank;
mod gmm;

pub use bank::GmmBank;
pub use gmm::{component_posterior, fit_gmm, fit_gmm_auto, select_k, GmmParams};

use crate::error::{Error, Result};
use crate::imagery::{Frame, Validity};

/// Spatial tile side used to group pixels.
pub const TILE_SIZE: usize = 32;

/// Default segmentation cut; chosen in the middle of the low-impact
/// [100, 130] range.
pub const DEFAULT_SIGMA: f64 = 120.0;

/// Identifies one pixel group: an hour of day and a spatial tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PixelGroupKey {
    pub hour: u8,
    pub tile_row: u16,
    pub tile_col: u16,
}

/// Number of tiles along each axis for a frame of the given dimensions.
pub fn tile_grid(width: usize, height: usize) -> (usize, usize) {
    (height.div_ceil(TILE_SIZE), width.div_ceil(TILE_SIZE))
}

/// Collects every pixel intensity whose frame hour and tile match `key`.
/// Frames that are missing or corrupt are excluded.
pub fn collect_group(frames: &[Frame], key: PixelGroupKey) -> Result<Vec<f64>> {
    let mut samples = Vec::new();
    for frame in frames {
        if frame.validity != Validity::Ok || frame.timestamp.hour() != key.hour {
            continue;
        }
        let (tiles_down, tiles_across) = tile_grid(frame.width(), frame.height());
        if key.tile_row as usize >= tiles_down || key.tile_col as usize >= tiles_across {
            continue;
        }
        let r0 = key.tile_row as usize * TILE_SIZE;
        let r1 = (r0 + TILE_SIZE).min(frame.height());
        let c0 = key.tile_col as usize * TILE_SIZE;
        let c1 = (c0 + TILE_SIZE).min(frame.width());
        for r in r0..r1 {
            let row = frame.row(r);
            samples.extend(row[c0..c1].iter().map(|&p| p as f64));
        }
    }
    if samples.is_empty() {
        return Err(Error::EmptyGroup(format!(
            "no samples for hour {} tile ({}, {})",
            key.hour, key.tile_row, key.tile_col
        )));
    }
    Ok(samples)
}

/// Intensity after segmentation: `I * p1` when that product reaches the cut
/// `sigma`, else 0. `p1` is the posterior of the highest-mean component.
pub fn segment_pixel(gmm: &GmmParams, intensity: f64, sigma: f64) -> f64 {
    let p1 = component_posterior(gmm, intensity)[0];
    let value = intensity * p1;
    if value >= sigma {
        value
    } else {
        0.0
    }
}

/// Applies `segment_pixel` to every pixel of the frame using the bank's
/// per-(hour, tile) mixtures with filtered high-cloud means.
///
/// Intensities are 8-bit, so each tile's map is evaluated once per level and
/// applied through a lookup table.
pub fn segment_frame(frame: &Frame, bank: &GmmBank, sigma: f64) -> Result<Frame> {
    if frame.validity != Validity::Ok {
        return Err(Error::Precondition("frame validity must be ok".into()));
    }
    let hour = frame.timestamp.hour();
    let (tiles_down, tiles_across) = tile_grid(frame.width(), frame.height());
    let mut out = vec![0u8; frame.width() * frame.height()];
    for tr in 0..tiles_down {
        for tc in 0..tiles_across {
            let key = PixelGroupKey { hour, tile_row: tr as u16, tile_col: tc as u16 };
            let params = bank
                .filtered_params(key)
                .ok_or_else(|| Error::Coverage(format!("no bank entry for {key:?}")))?;
            let mut lut = [0u8; 256];
            for (level, slot) in lut.iter_mut().enumerate() {
                *slot = segment_pixel(&params, level as f64, sigma).round() as u8;
            }
            let r1 = ((tr + 1) * TILE_SIZE).min(frame.height());
            let c0 = tc * TILE_SIZE;
            let c1 = ((tc + 1) * TILE_SIZE).min(frame.width());
            for r in tr * TILE_SIZE..r1 {
                let src = &frame.row(r)[c0..c1];
                let dst = &mut out[r * frame.width() + c0..r * frame.width() + c1];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d = lut[s as usize];
                }
            }
        }
    }
    Frame::new(frame.width(), frame.height(), out, frame.timestamp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagery::Timestamp;

    fn frame_at(hour: u32, fill: u8, w: usize, h: usize) -> Frame {
        let mut px = vec![fill; w * h];
        // Perturb a little so validity stays ok.
        for (i, p) in px.iter_mut().enumerate() {
            if i % 7 == 0 {
                *p = p.saturating_add(40);
            }
        }
        Frame::new(w, h, px, Timestamp::from_ymd_hm(2008, 1, 1, hour, 15).unwrap()).unwrap()
    }

    #[test]
    fn collect_group_counts() {
        let textured = |d: usize| {
            let mut px = vec![60u8; 32 * 32];
            for p in px.iter_mut().skip(d).step_by(4) {
                *p = 200;
            }
            px
        };
        let frames: Vec<Frame> = (0..10)
            .map(|d| {
                Frame::new(32, 32, textured(d), Timestamp::from_ymd_hm(2008, 1, 1 + d as u32, 3, 15).unwrap())
                    .unwrap()
            })
            .chain((0..5).map(|d| {
                Frame::new(32, 32, textured(d), Timestamp::from_ymd_hm(2008, 2, 1 + d as u32, 4, 15).unwrap())
                    .unwrap()
            }))
            .collect();
        let key = PixelGroupKey { hour: 3, tile_row: 0, tile_col: 0 };
        assert_eq!(collect_group(&frames, key).unwrap().len(), 10 * 1024);
        let single = collect_group(&frames[..1], key).unwrap();
        assert_eq!(single.len(), 1024);
        let missing = PixelGroupKey { hour: 9, tile_row: 0, tile_col: 0 };
        assert!(matches!(collect_group(&frames, missing), Err(Error::EmptyGroup(_))));
    }

    #[test]
    fn collect_group_skips_corrupt_frames() {
        let good = frame_at(3, 60, 32, 32);
        let flat = Frame::new(32, 32, vec![60; 1024], Timestamp::from_ymd_hm(2008, 1, 2, 3, 15).unwrap())
            .unwrap();
        assert_eq!(flat.validity, Validity::CorruptLowContrast);
        let key = PixelGroupKey { hour: 3, tile_row: 0, tile_col: 0 };
        let samples = collect_group(&[good, flat], key).unwrap();
        assert_eq!(samples.len(), 1024);
    }

    #[test]
    fn segment_pixel_cut_examples() {
        // Well-separated two-component mixture puts a bright pixel fully in
        // component 1, so the cut acts on I * p1 directly.
        let gmm = GmmParams::from_parts(vec![0.5, 0.5], vec![200.0, 60.0], vec![25.0, 25.0]);
        assert_eq!(segment_pixel(&gmm, 255.0, 120.0), 255.0);
        // Hand-built posteriors: identical components give p1 = 0.5.
        let even = GmmParams::from_parts(vec![0.5, 0.5], vec![128.0, 128.0], vec![100.0, 100.0]);
        assert_eq!(segment_pixel(&even, 200.0, 120.0), 0.0); // 200 * 0.5 = 100 < 120
        // p1 = 0.7 via weights on identical components.
        let biased = GmmParams::from_parts(vec![0.7, 0.3], vec![128.0, 128.0], vec![100.0, 100.0]);
        let v = segment_pixel(&biased, 200.0, 120.0);
        assert!((v - 140.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn segment_pixel_never_in_open_interval() {
        let gmm = GmmParams::from_parts(vec![0.6, 0.4], vec![210.0, 50.0], vec![200.0, 150.0]);
        for sigma in [100.0, 120.0, 130.0] {
            for level in 0..=255 {
                let v = segment_pixel(&gmm, level as f64, sigma);
                assert!(v == 0.0 || v >= sigma, "sigma {sigma} level {level} -> {v}");
            }
        }
    }
}

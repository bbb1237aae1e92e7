//! Shared fixtures for the pipeline benchmarks.

use commadet::imagery::{Frame, Timestamp};
use commadet::segmentation::{GmmBank, GmmParams, PixelGroupKey};

/// A deterministic textured frame with a bright blob, sized like the
/// synthetic corpus frames.
pub fn textured_frame(width: usize, height: usize) -> Frame {
    let mut pixels = vec![0u8; width * height];
    let mut state = 0x5eed_5eedu64;
    for (i, p) in pixels.iter_mut().enumerate() {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let noise = (state >> 58) as i32 - 32;
        let r = (i / width) as i32;
        let c = (i % width) as i32;
        let blob = {
            let dr = r - height as i32 / 2;
            let dc = c - width as i32 / 2;
            if dr * dr + dc * dc < (height as i32 / 4).pow(2) {
                180
            } else {
                0
            }
        };
        *p = (45 + noise).clamp(0, 199).max(blob) as u8;
    }
    Frame::new(width, height, pixels, Timestamp::from_ymd_hm(2008, 6, 1, 12, 15).unwrap())
        .unwrap()
}

/// A frame sequence at the half-hourly cadence whose texture drifts east one
/// pixel per frame.
pub fn drifting_sequence(width: usize, height: usize, steps: usize) -> Vec<Frame> {
    let base = textured_frame(width, height);
    (0..steps)
        .map(|s| {
            let mut pixels = vec![0u8; width * height];
            for r in 0..height {
                for c in 0..width {
                    let src = (c + width - (s % width)) % width;
                    pixels[r * width + c] = base.get(r, src);
                }
            }
            Frame::new(
                width,
                height,
                pixels,
                Timestamp::from_ymd_hm(2008, 6, 1, 0, 15).unwrap().add_minutes(s as i64 * 30),
            )
            .unwrap()
        })
        .collect()
}

/// A uniform mixture bank covering the frame's grid for every hour.
pub fn flat_bank(width: usize, height: usize) -> GmmBank {
    let (tiles_down, tiles_across) = commadet::segmentation::tile_grid(width, height);
    let mut entries = Vec::new();
    for hour in 0..24u8 {
        for tr in 0..tiles_down as u16 {
            for tc in 0..tiles_across as u16 {
                entries.push((
                    PixelGroupKey { hour, tile_row: tr, tile_col: tc },
                    GmmParams::from_parts(vec![0.3, 0.7], vec![190.0, 45.0], vec![300.0, 60.0]),
                ));
            }
        }
    }
    GmmBank::from_entries(tiles_down, tiles_across, entries).minmax_filter()
}

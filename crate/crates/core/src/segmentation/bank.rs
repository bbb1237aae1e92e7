//! The trained mixture bank: one GMM per (hour, tile), the min-max filter,
//! and the bank's on-disk format.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imagery::{Frame, Validity};
use crate::seeding::derive_seed2;
use crate::segmentation::{collect_group, fit_gmm_auto, tile_grid, GmmParams, PixelGroupKey};

const BANK_FORMAT: &str = "gmm-bank v1";

#[derive(Debug, Clone)]
struct BankEntry {
    params: GmmParams,
    /// High-cloud mean after the min-max filter; never below the fitted one.
    filtered_mean: f64,
}

/// Per-(hour, tile) mixture parameters driving segmentation.
///
/// Training parallelizes over group keys; a trained bank is immutable and
/// shared read-only by segmentation workers.
#[derive(Debug, Clone)]
pub struct GmmBank {
    tiles_down: usize,
    tiles_across: usize,
    entries: BTreeMap<PixelGroupKey, BankEntry>,
}

impl GmmBank {
    /// Fits a mixture for every (hour, tile) group present in `frames`.
    /// Groups larger than `max_group_samples` are thinned by a deterministic
    /// stride so desk-scale training stays fast.
    pub fn train(frames: &[Frame], max_group_samples: usize, seed: u64) -> Result<GmmBank> {
        let first = frames
            .iter()
            .find(|f| f.validity == Validity::Ok)
            .ok_or_else(|| Error::Training("no valid frames to train on".into()))?;
        let (tiles_down, tiles_across) = tile_grid(first.width(), first.height());
        let mut hours: Vec<u8> = frames
            .iter()
            .filter(|f| f.validity == Validity::Ok)
            .map(|f| f.timestamp.hour())
            .collect();
        hours.sort_unstable();
        hours.dedup();

        let mut keys = Vec::new();
        for &hour in &hours {
            for tile_row in 0..tiles_down as u16 {
                for tile_col in 0..tiles_across as u16 {
                    keys.push(PixelGroupKey { hour, tile_row, tile_col });
                }
            }
        }
        let fitted: Result<Vec<(PixelGroupKey, BankEntry)>> = keys
            .into_par_iter()
            .map(|key| {
                let mut samples = collect_group(frames, key)?;
                if samples.len() > max_group_samples {
                    samples = thin(&samples, max_group_samples);
                }
                let group_seed =
                    derive_seed2(seed, key.hour as u64, (key.tile_row as u64) << 16 | key.tile_col as u64);
                let params = fit_gmm_auto(&samples, group_seed)?;
                let filtered_mean = params.means()[0];
                Ok((key, BankEntry { params, filtered_mean }))
            })
            .collect();
        let bank = GmmBank { tiles_down, tiles_across, entries: fitted?.into_iter().collect() };
        Ok(bank.minmax_filter())
    }

    /// Min-max filter over the high-cloud means: each group's mean is raised
    /// to the minimum over its spatiotemporal neighbors (hours wrap modulo
    /// 24, tiles within Chebyshev distance 1 clipped at the grid edges), but
    /// never lowered. Posteriors later use the filtered mean with weights and
    /// variances unchanged.
    pub fn minmax_filter(&self) -> GmmBank {
        let mut out = self.clone();
        for (key, entry) in out.entries.iter_mut() {
            let mut neighborhood_min = f64::INFINITY;
            for dh in [-1i32, 0, 1] {
                let hour = (key.hour as i32 + dh).rem_euclid(24) as u8;
                for dr in [-1i32, 0, 1] {
                    for dc in [-1i32, 0, 1] {
                        if dh == 0 && dr == 0 && dc == 0 {
                            continue;
                        }
                        let tr = key.tile_row as i32 + dr;
                        let tc = key.tile_col as i32 + dc;
                        if tr < 0
                            || tc < 0
                            || tr >= self.tiles_down as i32
                            || tc >= self.tiles_across as i32
                        {
                            continue;
                        }
                        let nk = PixelGroupKey { hour, tile_row: tr as u16, tile_col: tc as u16 };
                        if let Some(n) = self.entries.get(&nk) {
                            neighborhood_min = neighborhood_min.min(n.params.means()[0]);
                        }
                    }
                }
            }
            let own = entry.params.means()[0];
            entry.filtered_mean = if neighborhood_min.is_finite() {
                own.max(neighborhood_min)
            } else {
                own
            };
        }
        out
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.tiles_down, self.tiles_across)
    }

    pub fn params(&self, key: PixelGroupKey) -> Option<&GmmParams> {
        self.entries.get(&key).map(|e| &e.params)
    }

    pub fn filtered_mean(&self, key: PixelGroupKey) -> Option<f64> {
        self.entries.get(&key).map(|e| e.filtered_mean)
    }

    /// Parameters with the filtered high-cloud mean substituted in; what
    /// segmentation actually evaluates.
    pub fn filtered_params(&self, key: PixelGroupKey) -> Option<GmmParams> {
        self.entries.get(&key).map(|e| e.params.with_high_mean(e.filtered_mean))
    }

    pub fn keys(&self) -> impl Iterator<Item = &PixelGroupKey> {
        self.entries.keys()
    }

    // -- serialization ------------------------------------------------------

    /// Structured text: a versioned header, the grid line, then one record
    /// per key: `hour tile_row tile_col k | weights | means | variances |
    /// filtered_mean`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{BANK_FORMAT}");
        let _ = writeln!(out, "grid {} {}", self.tiles_down, self.tiles_across);
        for (key, entry) in &self.entries {
            let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
            let _ = writeln!(
                out,
                "{} {} {} {} | {} | {} | {} | {:?}",
                key.hour,
                key.tile_row,
                key.tile_col,
                entry.params.k(),
                join(entry.params.weights()),
                join(entry.params.means()),
                join(entry.params.variances()),
                entry.filtered_mean,
            );
        }
        out
    }

    pub fn from_text(text: &str) -> Result<GmmBank> {
        let mut lines = text.lines();
        match lines.next() {
            Some(l) if l.trim() == BANK_FORMAT => {}
            other => {
                return Err(Error::Format(format!(
                    "expected bank header {BANK_FORMAT:?}, got {other:?}"
                )))
            }
        }
        let grid_line = lines
            .next()
            .ok_or_else(|| Error::Format("missing bank grid line".into()))?;
        let grid: Vec<&str> = grid_line.split_whitespace().collect();
        if grid.len() != 3 || grid[0] != "grid" {
            return Err(Error::Format(format!("bad grid line {grid_line:?}")));
        }
        let tiles_down = parse_usize(grid[1])?;
        let tiles_across = parse_usize(grid[2])?;
        let mut entries = BTreeMap::new();
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split('|').map(str::trim).collect();
            if parts.len() != 5 {
                return Err(Error::Format(format!("bad bank record {line:?}")));
            }
            let head: Vec<&str> = parts[0].split_whitespace().collect();
            if head.len() != 4 {
                return Err(Error::Format(format!("bad bank record head {line:?}")));
            }
            let key = PixelGroupKey {
                hour: parse_usize(head[0])? as u8,
                tile_row: parse_usize(head[1])? as u16,
                tile_col: parse_usize(head[2])? as u16,
            };
            let k = parse_usize(head[3])?;
            let weights = parse_f64s(parts[1])?;
            let means = parse_f64s(parts[2])?;
            let variances = parse_f64s(parts[3])?;
            if weights.len() != k || means.len() != k || variances.len() != k {
                return Err(Error::Format(format!("component count mismatch in {line:?}")));
            }
            let filtered_mean: f64 = parts[4]
                .parse()
                .map_err(|_| Error::Format(format!("bad filtered mean in {line:?}")))?;
            let params = GmmParams::from_parts(weights, means, variances);
            entries.insert(key, BankEntry { params, filtered_mean });
        }
        Ok(GmmBank { tiles_down, tiles_across, entries })
    }

    /// Builds a bank directly from parts; used by tests and deserialization.
    pub fn from_entries(
        tiles_down: usize,
        tiles_across: usize,
        entries: impl IntoIterator<Item = (PixelGroupKey, GmmParams)>,
    ) -> GmmBank {
        GmmBank {
            tiles_down,
            tiles_across,
            entries: entries
                .into_iter()
                .map(|(k, p)| {
                    let filtered_mean = p.means()[0];
                    (k, BankEntry { params: p, filtered_mean })
                })
                .collect(),
        }
    }
}

fn thin(samples: &[f64], cap: usize) -> Vec<f64> {
    let stride = samples.len().div_ceil(cap);
    samples.iter().step_by(stride).copied().collect()
}

fn parse_usize(text: &str) -> Result<usize> {
    text.parse()
        .map_err(|_| Error::Format(format!("bad integer {text:?}")))
}

fn parse_f64s(text: &str) -> Result<Vec<f64>> {
    text.split_whitespace()
        .map(|t| {
            t.parse()
                .map_err(|_| Error::Format(format!("bad float {t:?}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_bank(mean: f64) -> GmmBank {
        let mut entries = Vec::new();
        for hour in 0..24u8 {
            for tr in 0..3u16 {
                for tc in 0..3u16 {
                    entries.push((
                        PixelGroupKey { hour, tile_row: tr, tile_col: tc },
                        GmmParams::from_parts(vec![0.6, 0.4], vec![mean, 50.0], vec![30.0, 20.0]),
                    ));
                }
            }
        }
        GmmBank::from_entries(3, 3, entries)
    }

    #[test]
    fn minmax_uniform_bank_is_fixed_point() {
        let bank = uniform_bank(210.0).minmax_filter();
        for key in bank.keys() {
            assert_eq!(bank.filtered_mean(*key).unwrap(), 210.0);
        }
    }

    #[test]
    fn minmax_raises_isolated_low_tile() {
        let mut entries = Vec::new();
        for hour in 0..24u8 {
            for tr in 0..3u16 {
                for tc in 0..3u16 {
                    let low = hour == 6 && tr == 1 && tc == 1;
                    let mean = if low { 150.0 } else { 220.0 + hour as f64 };
                    entries.push((
                        PixelGroupKey { hour, tile_row: tr, tile_col: tc },
                        GmmParams::from_parts(vec![0.6, 0.4], vec![mean, 40.0], vec![25.0, 25.0]),
                    ));
                }
            }
        }
        let bank = GmmBank::from_entries(3, 3, entries);
        let filtered = bank.minmax_filter();
        let key = PixelGroupKey { hour: 6, tile_row: 1, tile_col: 1 };
        // 26-neighborhood spans hours 5..=7; its minimum among the others is
        // 220 + 5 = 225.
        assert_eq!(filtered.filtered_mean(key).unwrap(), 225.0);
        // Every mean is monotone non-decreasing under the filter.
        for key in bank.keys() {
            assert!(filtered.filtered_mean(*key).unwrap() >= bank.params(*key).unwrap().means()[0]);
        }
        // And idempotent on the already-uniform part away from the dip.
        let far = PixelGroupKey { hour: 18, tile_row: 0, tile_col: 0 };
        assert_eq!(filtered.filtered_mean(far).unwrap(), 238.0);
    }

    #[test]
    fn text_roundtrip() {
        let bank = uniform_bank(233.5).minmax_filter();
        let text = bank.to_text();
        assert!(text.starts_with("gmm-bank v1\n"));
        let back = GmmBank::from_text(&text).unwrap();
        assert_eq!(back.len(), bank.len());
        for key in bank.keys() {
            assert_eq!(back.filtered_mean(*key), bank.filtered_mean(*key));
            assert_eq!(back.params(*key).unwrap().means(), bank.params(*key).unwrap().means());
        }
        // Serialization is stable byte for byte.
        assert_eq!(text, GmmBank::from_text(&text).unwrap().to_text());
    }
}

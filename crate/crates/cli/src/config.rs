//! Flat key=value run configuration.
//!
//! Resolution order: command-line flags override file entries, file entries
//! override built-in defaults. Every run echoes its resolved configuration
//! next to its outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use commadet::{PipelineConfig, SynthConfig};

#[derive(Debug, Default, Clone)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("config line {}: expected key=value, got {raw:?}", i + 1);
            };
            entries.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(KvConfig { entries })
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| anyhow::anyhow!("config key {key}={raw:?}: {e}")),
        }
    }
}

/// One resolved tunable, for flag-over-file-over-default plumbing.
pub fn resolve<T: std::str::FromStr + Copy>(
    flag: Option<T>,
    file: &KvConfig,
    key: &str,
    default: T,
) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    Ok(flag.or(file.get(key)?).unwrap_or(default))
}

/// Pipeline tunables resolved from flags and the config file.
#[allow(clippy::too_many_arguments)]
pub fn resolve_pipeline(
    file: &KvConfig,
    sigma: Option<f64>,
    displacement_west: Option<i32>,
    span_hours: Option<f64>,
    linear_min: Option<f64>,
    gamma_min: Option<f64>,
    nms_iou: Option<f64>,
    rounds: Option<usize>,
    p0: Option<f64>,
    seed: Option<u64>,
) -> Result<PipelineConfig> {
    let defaults = PipelineConfig::default();
    let mut cfg = defaults.clone();
    cfg.sigma = resolve(sigma, file, "sigma", defaults.sigma)?;
    let west = resolve(displacement_west, file, "displacement_west_px", -defaults.displacement.1)?;
    cfg.displacement = (0, -west);
    cfg.span_hours = resolve(span_hours, file, "span_hours", defaults.span_hours)?;
    cfg.thresholds.mean_min = resolve(None, file, "mean_min", defaults.thresholds.mean_min)?;
    cfg.thresholds.mean_max = resolve(None, file, "mean_max", defaults.thresholds.mean_max)?;
    cfg.thresholds.linear_min =
        resolve(linear_min, file, "linear_min", defaults.thresholds.linear_min)?;
    cfg.thresholds.gamma_min =
        resolve(gamma_min, file, "gamma_min", defaults.thresholds.gamma_min)?;
    cfg.nms_iou = resolve(nms_iou, file, "nms_iou", defaults.nms_iou)?;
    cfg.rounds = resolve(rounds, file, "rounds", defaults.rounds)?;
    cfg.p0 = resolve(p0, file, "p0", defaults.p0)?;
    cfg.weaks_per_kind = resolve(None, file, "weaks_per_kind", defaults.weaks_per_kind)?;
    cfg.stack_negative_ratio =
        resolve(None, file, "stack_negative_ratio", defaults.stack_negative_ratio)?;
    cfg.train_frac = resolve(None, file, "train_frac", defaults.train_frac)?;
    cfg.cv_frac = resolve(None, file, "cv_frac", defaults.cv_frac)?;
    cfg.max_group_samples =
        resolve(None, file, "max_group_samples", defaults.max_group_samples)?;
    cfg.max_patch_rows = resolve(None, file, "max_patch_rows", defaults.max_patch_rows)?;
    cfg.seed = resolve(seed, file, "seed", defaults.seed)?;
    Ok(cfg)
}

pub fn resolve_synth(file: &KvConfig, seed: Option<u64>) -> Result<SynthConfig> {
    let d = SynthConfig::default();
    let mut cfg = d.clone();
    cfg.width = resolve(None, file, "width", d.width)?;
    cfg.height = resolve(None, file, "height", d.height)?;
    cfg.duration_hours = resolve(None, file, "duration_hours", d.duration_hours)?;
    cfg.frames_per_hour = resolve(None, file, "frames_per_hour", d.frames_per_hour)?;
    cfg.systems_per_day = resolve(None, file, "systems_per_day", d.systems_per_day)?;
    cfg.comma_side_range = (
        resolve(None, file, "comma_side_min", d.comma_side_range.0)?,
        resolve(None, file, "comma_side_max", d.comma_side_range.1)?,
    );
    cfg.rotation_deg_per_frame =
        resolve(None, file, "rotation_deg_per_frame", d.rotation_deg_per_frame)?;
    cfg.drift_px_per_frame = resolve(None, file, "drift_px_per_frame", d.drift_px_per_frame)?;
    cfg.background_base = resolve(None, file, "background_base", d.background_base)?;
    cfg.diurnal_amplitude = resolve(None, file, "diurnal_amplitude", d.diurnal_amplitude)?;
    cfg.noise_amplitude = resolve(None, file, "noise_amplitude", d.noise_amplitude)?;
    cfg.clutter_per_day = resolve(None, file, "clutter_per_day", d.clutter_per_day)?;
    cfg.dim_floor = resolve(None, file, "dim_floor", d.dim_floor)?;
    cfg.lifetime_hours = resolve(None, file, "lifetime_hours", d.lifetime_hours)?;
    cfg.spawn_hour = resolve(None, file, "spawn_hour", d.spawn_hour)?;
    cfg.seed = resolve(seed, file, "seed", d.seed)?;
    Ok(cfg)
}

pub fn echo_pipeline(cfg: &PipelineConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "sigma={}", cfg.sigma);
    let _ = writeln!(out, "displacement_west_px={}", -cfg.displacement.1);
    let _ = writeln!(out, "span_hours={}", cfg.span_hours);
    let _ = writeln!(out, "mean_min={}", cfg.thresholds.mean_min);
    let _ = writeln!(out, "mean_max={}", cfg.thresholds.mean_max);
    let _ = writeln!(out, "linear_min={}", cfg.thresholds.linear_min);
    let _ = writeln!(out, "gamma_min={}", cfg.thresholds.gamma_min);
    let _ = writeln!(out, "nms_iou={}", cfg.nms_iou);
    let _ = writeln!(out, "rounds={}", cfg.rounds);
    let _ = writeln!(out, "p0={}", cfg.p0);
    let _ = writeln!(out, "weaks_per_kind={}", cfg.weaks_per_kind);
    let _ = writeln!(out, "stack_negative_ratio={}", cfg.stack_negative_ratio);
    let _ = writeln!(out, "train_frac={}", cfg.train_frac);
    let _ = writeln!(out, "cv_frac={}", cfg.cv_frac);
    let _ = writeln!(out, "max_group_samples={}", cfg.max_group_samples);
    let _ = writeln!(out, "max_patch_rows={}", cfg.max_patch_rows);
    let _ = writeln!(out, "seed={}", cfg.seed);
    out
}

pub fn echo_synth(cfg: &SynthConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "width={}", cfg.width);
    let _ = writeln!(out, "height={}", cfg.height);
    let _ = writeln!(out, "duration_hours={}", cfg.duration_hours);
    let _ = writeln!(out, "frames_per_hour={}", cfg.frames_per_hour);
    let _ = writeln!(out, "systems_per_day={}", cfg.systems_per_day);
    let _ = writeln!(out, "comma_side_min={}", cfg.comma_side_range.0);
    let _ = writeln!(out, "comma_side_max={}", cfg.comma_side_range.1);
    let _ = writeln!(out, "rotation_deg_per_frame={}", cfg.rotation_deg_per_frame);
    let _ = writeln!(out, "drift_px_per_frame={}", cfg.drift_px_per_frame);
    let _ = writeln!(out, "background_base={}", cfg.background_base);
    let _ = writeln!(out, "diurnal_amplitude={}", cfg.diurnal_amplitude);
    let _ = writeln!(out, "noise_amplitude={}", cfg.noise_amplitude);
    let _ = writeln!(out, "clutter_per_day={}", cfg.clutter_per_day);
    let _ = writeln!(out, "dim_floor={}", cfg.dim_floor);
    let _ = writeln!(out, "lifetime_hours={}", cfg.lifetime_hours);
    let _ = writeln!(out, "spawn_hour={}", cfg.spawn_hour);
    let _ = writeln!(out, "seed={}", cfg.seed);
    out
}

//! Deterministic synthetic satellite sequences with ground truth.
//!
//! Comma systems are planted with a diurnally phase-locked intensity
//! lifecycle: they form in the early afternoon, brighten to a mature
//! plateau, and fade overnight, while drifting east and slowly rotating.
//! Brightness climbs from the comma head toward the tail core, so
//! fixed-intensity baselines see only fragments outside full maturity while
//! shape and motion survive every phase. Bright non-comma clutter blobs
//! provide hard negatives, and each comma spawns storm events inside its
//! head region.
//!
//! Everything derives from the master seed through per-object and per-frame
//! substreams, so a corpus is byte-for-byte reproducible regardless of
//! render order.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::imagery::{
    pgm, write_labels_csv, write_storms_csv, BBox, Frame, LabeledCloud, StormEvent, Timestamp,
    STORM_KINDS,
};
use crate::seeding::{derive_seed, derive_seed2};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub start: Timestamp,
    pub duration_hours: u32,
    /// Frames per hour; 2 places them at :15 and :45.
    pub frames_per_hour: u32,
    /// Comma systems attempted per day (collisions may skip some).
    pub systems_per_day: u32,
    pub comma_side_range: (u32, u32),
    pub rotation_deg_per_frame: f64,
    /// Eastward drift; at the default cadence, 1 px/frame matches the
    /// 10-pixel motion-correlation displacement over its 5-hour span.
    pub drift_px_per_frame: f64,
    pub background_base: f64,
    /// Half the peak-to-trough diurnal swing of the background.
    pub diurnal_amplitude: f64,
    pub noise_amplitude: f64,
    /// Non-comma bright blobs attempted per day.
    pub clutter_per_day: u32,
    /// Intensity scale at the dim ends of a comma's lifecycle.
    pub dim_floor: f64,
    pub lifetime_hours: f64,
    /// Local hour around which systems form.
    pub spawn_hour: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            width: 768,
            height: 384,
            start: Timestamp::from_ymd_hm(2008, 1, 1, 0, 15).expect("valid date"),
            duration_hours: 480,
            frames_per_hour: 2,
            systems_per_day: 3,
            comma_side_range: (160, 272),
            rotation_deg_per_frame: 1.2,
            drift_px_per_frame: 1.0,
            background_base: 45.0,
            diurnal_amplitude: 15.0,
            noise_amplitude: 8.0,
            clutter_per_day: 6,
            dim_floor: 0.80,
            lifetime_hours: 8.0,
            spawn_hour: 13.0,
            seed: 20080101,
        }
    }
}

impl SynthConfig {
    pub fn frame_count(&self) -> usize {
        (self.duration_hours * self.frames_per_hour) as usize
    }

    pub fn minutes_per_frame(&self) -> i64 {
        60 / self.frames_per_hour as i64
    }

    pub fn frame_timestamp(&self, index: usize) -> Timestamp {
        self.start.add_minutes(index as i64 * self.minutes_per_frame())
    }
}

/// A generated corpus: frames in time order plus ground truth.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub frames: Vec<Frame>,
    pub labels: Vec<LabeledCloud>,
    pub storms: Vec<StormEvent>,
    /// Comma systems successfully placed (for verification).
    pub planted_commas: usize,
}

// ---------------------------------------------------------------------------
// Comma geometry
// ---------------------------------------------------------------------------

// All geometry lives in unit coordinates (row, col) in [-0.5, 0.5]^2 and is
// scaled by the box side at render time. The head disc sits northwest with
// a dry-slot wedge carved from its southeast flank; the tail is a curved
// band sweeping east. Everything stays within radius 0.49 of the center so
// rotation never leaves the box.
const HEAD_CENTER: (f64, f64) = (-0.14, -0.14);
const HEAD_RADIUS: f64 = 0.29;
const SLOT_INNER: f64 = 0.09;
const SLOT_HALF_ANGLE_COS: f64 = 0.573; // cos(55 degrees)
const TAIL_P0: (f64, f64) = (0.04, 0.04);
const TAIL_P1: (f64, f64) = (0.30, 0.16);
// The tail sweeps southeast then bends back northeast, the classic
// southwest-to-northeast comma body.
const TAIL_P2: (f64, f64) = (-0.04, 0.40);
const TAIL_HALF_WIDTH: f64 = 0.135;
const TAIL_TAPER: f64 = 0.15;
const TAIL_CURVE_STEPS: usize = 48;

/// Gradient coordinate q in [0, 1] when the (rotated-back) unit point lies
/// in the comma mask: near 0 at the head, 1 at the tail core.
fn comma_membership(u_row: f64, u_col: f64, phase_rad: f64) -> Option<f64> {
    // Rotate the sample back into the pattern's local frame.
    let (sin, cos) = phase_rad.sin_cos();
    let r = cos * u_row + sin * u_col;
    let c = -sin * u_row + cos * u_col;

    // Head disc minus the dry-slot wedge.
    let dr = r - HEAD_CENTER.0;
    let dc = c - HEAD_CENTER.1;
    let d = (dr * dr + dc * dc).sqrt();
    if d <= HEAD_RADIUS {
        let in_slot = d > SLOT_INNER && {
            // Slot opens toward the southeast (positive row and column).
            let toward = (dr + dc) / (d * std::f64::consts::SQRT_2);
            toward > SLOT_HALF_ANGLE_COS
        };
        if !in_slot {
            return Some(0.12 * (d / HEAD_RADIUS));
        }
    }

    // Tail band around a quadratic Bezier, tapering toward the tip.
    let mut best: Option<f64> = None;
    for k in 0..=TAIL_CURVE_STEPS {
        let t = k as f64 / TAIL_CURVE_STEPS as f64;
        let omt = 1.0 - t;
        let br = omt * omt * TAIL_P0.0 + 2.0 * omt * t * TAIL_P1.0 + t * t * TAIL_P2.0;
        let bc = omt * omt * TAIL_P0.1 + 2.0 * omt * t * TAIL_P1.1 + t * t * TAIL_P2.1;
        let dist = ((r - br) * (r - br) + (c - bc) * (c - bc)).sqrt();
        if dist <= TAIL_HALF_WIDTH * (1.0 - TAIL_TAPER * t) {
            let q = 0.22 + 0.78 * t;
            best = Some(best.map_or(q, |b: f64| b.max(q)));
        }
    }
    best
}

/// Body intensity before the lifecycle scale: 210 at the head floor rising
/// to 245 in the tail core, with mild banding for texture.
fn comma_intensity(q: f64, u_row: f64) -> f64 {
    let banding = 3.0 * (2.0 * PI * u_row / 0.55).sin();
    (210.0 + 35.0 * q + banding).clamp(210.0, 245.0)
}

/// A rendered comma patch: the cloud mask and its intensities (zero outside
/// the mask, so the dry slot and surroundings stay dark).
#[derive(Debug, Clone)]
pub struct CommaPatch {
    pub side: u32,
    pub mask: Vec<bool>,
    pub intensity: Vec<f32>,
}

impl CommaPatch {
    pub fn mask_fraction(&self) -> f64 {
        self.mask.iter().filter(|&&m| m).count() as f64 / self.mask.len() as f64
    }

    pub fn mean_intensity(&self) -> f64 {
        self.intensity.iter().map(|&v| v as f64).sum::<f64>() / self.intensity.len() as f64
    }

    /// Tight bounding square of the mask support, in patch coordinates.
    pub fn support_square(&self) -> Option<(i64, i64, u32)> {
        let side = self.side as usize;
        let (mut r0, mut r1, mut c0, mut c1) = (side, 0usize, side, 0usize);
        let mut any = false;
        for r in 0..side {
            for c in 0..side {
                if self.mask[r * side + c] {
                    any = true;
                    r0 = r0.min(r);
                    r1 = r1.max(r);
                    c0 = c0.min(c);
                    c1 = c1.max(c);
                }
            }
        }
        if !any {
            return None;
        }
        let extent = (r1 - r0 + 1).max(c1 - c0 + 1) as u32;
        let row_center = (r0 + r1) as i64 / 2;
        let col_center = (c0 + c1) as i64 / 2;
        Some((
            row_center - extent as i64 / 2,
            col_center - extent as i64 / 2,
            extent,
        ))
    }
}

/// Renders the canonical comma pattern at one rotation phase.
pub fn render_comma(side: u32, phase_deg: f64) -> CommaPatch {
    let s = side as usize;
    let phase = phase_deg.to_radians();
    let mut mask = vec![false; s * s];
    let mut intensity = vec![0f32; s * s];
    for r in 0..s {
        let u_row = (r as f64 + 0.5) / side as f64 - 0.5;
        for c in 0..s {
            let u_col = (c as f64 + 0.5) / side as f64 - 0.5;
            if let Some(q) = comma_membership(u_row, u_col, phase) {
                mask[r * s + c] = true;
                intensity[r * s + c] = comma_intensity(q, u_row) as f32;
            }
        }
    }
    CommaPatch { side, mask, intensity }
}

// ---------------------------------------------------------------------------
// Planted objects
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct CommaSystem {
    spawn_frame: usize,
    life_frames: usize,
    row_center: f64,
    col_center: f64,
    side: u32,
    phase0_deg: f64,
}

impl CommaSystem {
    fn active_at(&self, frame: usize) -> bool {
        frame >= self.spawn_frame && frame < self.spawn_frame + self.life_frames
    }

    fn progress(&self, frame: usize) -> f64 {
        (frame - self.spawn_frame) as f64 / (self.life_frames - 1).max(1) as f64
    }

    /// Intensity lifecycle: ramp from the dim floor to a mature plateau and
    /// back down.
    fn scale(&self, frame: usize, dim_floor: f64) -> f64 {
        let u = self.progress(frame);
        let ramp = 0.30;
        if u < ramp {
            dim_floor + (1.0 - dim_floor) * (u / ramp)
        } else if u > 1.0 - ramp {
            dim_floor + (1.0 - dim_floor) * ((1.0 - u) / ramp)
        } else {
            1.0
        }
    }

    fn phase_deg(&self, frame: usize, cfg: &SynthConfig) -> f64 {
        self.phase0_deg + cfg.rotation_deg_per_frame * (frame - self.spawn_frame) as f64
    }

    fn col_at(&self, frame: usize, cfg: &SynthConfig) -> f64 {
        self.col_center + cfg.drift_px_per_frame * (frame - self.spawn_frame) as f64
    }
}

#[derive(Debug, Clone)]
struct ClutterBlob {
    spawn_frame: usize,
    life_frames: usize,
    row_center: f64,
    col_center: f64,
    semi_major: f64,
    semi_minor: f64,
    angle_rad: f64,
    peak: f64,
}

impl ClutterBlob {
    fn active_at(&self, frame: usize) -> bool {
        frame >= self.spawn_frame && frame < self.spawn_frame + self.life_frames
    }

    fn col_at(&self, frame: usize, cfg: &SynthConfig) -> f64 {
        self.col_center + cfg.drift_px_per_frame * (frame - self.spawn_frame) as f64
    }

    fn scale(&self, frame: usize) -> f64 {
        let u = (frame - self.spawn_frame) as f64 / (self.life_frames - 1).max(1) as f64;
        0.85 + 0.15 * (PI * u).sin()
    }
}

// ---------------------------------------------------------------------------
// Corpus generation
// ---------------------------------------------------------------------------

/// Generates the full corpus: frames, per-frame tight labels, and storm
/// events inside comma heads.
pub fn generate_corpus(cfg: &SynthConfig) -> Result<Corpus> {
    let systems = plan_systems(cfg);
    let clutter = plan_clutter(cfg, &systems);
    let storms = plan_storms(cfg, &systems);

    let results: Vec<(Frame, Vec<LabeledCloud>)> = (0..cfg.frame_count())
        .into_par_iter()
        .map(|i| render_frame(cfg, i, &systems, &clutter))
        .collect();

    let mut frames = Vec::with_capacity(results.len());
    let mut labels = Vec::new();
    for (frame, frame_labels) in results {
        frames.push(frame);
        labels.extend(frame_labels);
    }
    Ok(Corpus { frames, labels, storms, planted_commas: systems.len() })
}

fn plan_systems(cfg: &SynthConfig) -> Vec<CommaSystem> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1));
    let days = (cfg.duration_hours / 24) as usize;
    let fph = cfg.frames_per_hour as f64;
    let mut systems: Vec<CommaSystem> = Vec::new();
    for day in 0..days {
        for slot in 0..cfg.systems_per_day {
            // Systems tile the day one lifetime apart, so each hour of day
            // always sees the same lifecycle phase and systems never overlap
            // in time.
            let spawn_hour =
                cfg.spawn_hour + slot as f64 * cfg.lifetime_hours + rng.gen_range(-0.4..0.4);
            let spawn_frame = ((day as f64 * 24.0 + spawn_hour) * fph).round() as usize;
            let life_hours = cfg.lifetime_hours + rng.gen_range(-0.5..0.5);
            let life_frames = (life_hours * fph).round() as usize;
            if spawn_frame + life_frames >= cfg.frame_count() {
                continue;
            }
            let side =
                rng.gen_range(cfg.comma_side_range.0..=cfg.comma_side_range.1) / 2 * 2;
            let half = side as f64 / 2.0 + 4.0;
            let drift_total = cfg.drift_px_per_frame * life_frames as f64;
            if cfg.height as f64 <= 2.0 * half || cfg.width as f64 <= 2.0 * half + drift_total {
                continue;
            }
            let mut placed = None;
            for _ in 0..60 {
                let row = rng.gen_range(half..cfg.height as f64 - half);
                let col = rng.gen_range(half..cfg.width as f64 - half - drift_total);
                let candidate = CommaSystem {
                    spawn_frame,
                    life_frames,
                    row_center: row,
                    col_center: col,
                    side,
                    phase0_deg: rng.gen_range(-22.0..22.0),
                };
                let clear = systems.iter().all(|other| {
                    let overlap_in_time = spawn_frame < other.spawn_frame + other.life_frames
                        && other.spawn_frame < spawn_frame + life_frames;
                    if !overlap_in_time {
                        return true;
                    }
                    let min_gap = (side + other.side) as f64 / 2.0 + 16.0;
                    let dr = row - other.row_center;
                    // Compare against the other's full drift span.
                    let other_cols =
                        other.col_center..=other.col_at(other.spawn_frame + other.life_frames, cfg);
                    let dc = if col < *other_cols.start() {
                        *other_cols.start() - col
                    } else if col > *other_cols.end() {
                        col - *other_cols.end()
                    } else {
                        0.0
                    };
                    (dr * dr + dc * dc).sqrt() >= min_gap
                });
                if clear {
                    placed = Some(candidate);
                    break;
                }
            }
            if let Some(system) = placed {
                systems.push(system);
            }
        }
    }
    systems
}

fn plan_clutter(cfg: &SynthConfig, systems: &[CommaSystem]) -> Vec<ClutterBlob> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 2));
    let days = (cfg.duration_hours / 24) as usize;
    let fph = cfg.frames_per_hour as f64;
    let mut blobs = Vec::new();
    for day in 0..days {
        for _ in 0..cfg.clutter_per_day {
            let spawn_hour: f64 = rng.gen_range(0.0..22.0);
            let spawn_frame = ((day as f64 * 24.0 + spawn_hour) * fph).round() as usize;
            let life_frames = (rng.gen_range(5.0..10.0) * fph).round() as usize;
            if spawn_frame + life_frames >= cfg.frame_count() {
                continue;
            }
            let semi_major: f64 = rng.gen_range(40.0..100.0);
            let semi_minor = semi_major * rng.gen_range(0.45..0.8);
            let margin = semi_major + 4.0;
            let drift_total = cfg.drift_px_per_frame * life_frames as f64;
            if cfg.height as f64 <= 2.0 * margin || cfg.width as f64 <= 2.0 * margin + drift_total {
                continue;
            }
            let mut placed = None;
            for _ in 0..40 {
                let row = rng.gen_range(margin..cfg.height as f64 - margin);
                let col = rng.gen_range(margin..cfg.width as f64 - margin - drift_total);
                let clear = systems.iter().all(|sys| {
                    let overlap = spawn_frame < sys.spawn_frame + sys.life_frames
                        && sys.spawn_frame < spawn_frame + life_frames;
                    if !overlap {
                        return true;
                    }
                    let min_gap = sys.side as f64 / 2.0 + semi_major + 32.0;
                    let dr = row - sys.row_center;
                    let dc_near = (col - sys.col_center)
                        .abs()
                        .min((col - sys.col_at(sys.spawn_frame + sys.life_frames, cfg)).abs());
                    (dr * dr + dc_near * dc_near).sqrt() >= min_gap
                });
                if clear {
                    placed = Some(ClutterBlob {
                        spawn_frame,
                        life_frames,
                        row_center: row,
                        col_center: col,
                        semi_major,
                        semi_minor,
                        angle_rad: rng.gen_range(0.0..PI),
                        peak: rng.gen_range(208.0..238.0),
                    });
                    break;
                }
            }
            if let Some(blob) = placed {
                blobs.push(blob);
            }
        }
    }
    blobs
}

fn plan_storms(cfg: &SynthConfig, systems: &[CommaSystem]) -> Vec<StormEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 3));
    let mut storms = Vec::new();
    let mut kind_cursor = 0usize;
    for system in systems {
        let events = rng.gen_range(1..=3usize);
        for _ in 0..events {
            // Uniform over the lifecycle, so storms also strike during the
            // dim forming and decaying phases.
            let at = system.spawn_frame
                + rng.gen_range(0..system.life_frames.max(1));
            let begin = cfg.frame_timestamp(at);
            let duration = 30 + rng.gen_range(0..=2u32) as i64 * 30;
            let (row, col) = sample_head_location(system, at, cfg, &mut rng);
            storms.push(StormEvent {
                begin,
                end: begin.add_minutes(duration),
                row,
                col,
                kind: STORM_KINDS[kind_cursor % STORM_KINDS.len()].to_string(),
            });
            kind_cursor += 1;
        }
    }
    storms
}

/// Samples a pixel inside the comma's head disc (outside the dry slot) in
/// the configuration the system has at the event's first frame.
fn sample_head_location(
    system: &CommaSystem,
    frame: usize,
    cfg: &SynthConfig,
    rng: &mut ChaCha8Rng,
) -> (u32, u32) {
    let phase = system.phase_deg(frame, cfg).to_radians();
    let col_center = system.col_at(frame, cfg);
    loop {
        let radius = HEAD_RADIUS * 0.8 * rng.gen_range(0.0f64..1.0).sqrt();
        let theta = rng.gen_range(0.0..2.0 * PI);
        let local = (
            HEAD_CENTER.0 + radius * theta.cos(),
            HEAD_CENTER.1 + radius * theta.sin(),
        );
        if comma_membership(
            local.0 * phase.cos() - local.1 * phase.sin(),
            local.0 * phase.sin() + local.1 * phase.cos(),
            phase,
        )
        .is_none()
        {
            continue;
        }
        // Forward-rotate the local point into frame coordinates.
        let (sin, cos) = phase.sin_cos();
        let r = cos * local.0 - sin * local.1;
        let c = sin * local.0 + cos * local.1;
        let row = system.row_center + r * system.side as f64;
        let col = col_center + c * system.side as f64;
        let row = row.round().clamp(0.0, cfg.height as f64 - 1.0) as u32;
        let col = col.round().clamp(0.0, cfg.width as f64 - 1.0) as u32;
        return (row, col);
    }
}

fn background_level(cfg: &SynthConfig, ts: Timestamp) -> f64 {
    let minutes_of_day = ts.minutes().rem_euclid(24 * 60) as f64;
    let hour = minutes_of_day / 60.0;
    cfg.background_base + cfg.diurnal_amplitude * (2.0 * PI * (hour - 3.0) / 24.0).sin()
}

/// Static spatial structure (terrain and sea-surface gradients) under the
/// diurnal base. Temporally constant, so it contributes spatial contrast
/// without ever correlating in time.
fn terrain_level(cfg: &SynthConfig, row: usize, col: usize) -> f64 {
    let ur = row as f64 / cfg.height as f64;
    let uc = col as f64 / cfg.width as f64;
    12.0 * (2.0 * PI * (1.3 * ur + 0.31)).sin() * (2.0 * PI * (0.9 * uc + 0.17)).cos()
        + 9.0 * (2.0 * PI * (2.3 * uc + 0.43)).sin()
        + 6.0 * (ur - 0.5)
}

fn render_frame(
    cfg: &SynthConfig,
    index: usize,
    systems: &[CommaSystem],
    clutter: &[ClutterBlob],
) -> (Frame, Vec<LabeledCloud>) {
    let ts = cfg.frame_timestamp(index);
    let (w, h) = (cfg.width, cfg.height);
    let base = background_level(cfg, ts);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed2(cfg.seed, 4, index as u64));
    let mut pixels = vec![0u8; w * h];
    // Background: diurnal base over static terrain plus triangular noise,
    // hard-clamped below 200 so planted structure owns the bright range.
    for (i, p) in pixels.iter_mut().enumerate() {
        let noise = (rng.gen_range(-1.0f64..1.0) + rng.gen_range(-1.0f64..1.0)) * 0.5
            * cfg.noise_amplitude;
        let terrain = terrain_level(cfg, i / w, i % w);
        *p = (base + terrain + noise).clamp(0.0, 199.0) as u8;
    }

    for blob in clutter.iter().filter(|b| b.active_at(index)) {
        let scale = blob.scale(index);
        let col_center = blob.col_at(index, cfg);
        let (sin, cos) = blob.angle_rad.sin_cos();
        let reach = blob.semi_major.ceil() as i64;
        let r0 = (blob.row_center as i64 - reach).max(0) as usize;
        let r1 = ((blob.row_center as i64 + reach) as usize).min(h - 1);
        let c0 = (col_center as i64 - reach).max(0) as usize;
        let c1 = ((col_center as i64 + reach) as usize).min(w - 1);
        for r in r0..=r1 {
            for c in c0..=c1 {
                let dr = r as f64 - blob.row_center;
                let dc = c as f64 - col_center;
                let major = (cos * dr + sin * dc) / blob.semi_major;
                let minor = (-sin * dr + cos * dc) / blob.semi_minor;
                let d2 = major * major + minor * minor;
                if d2 <= 1.0 {
                    let falloff = 1.0 - 0.25 * d2;
                    let value = (blob.peak * scale * falloff).clamp(0.0, 255.0) as u8;
                    let i = r * w + c;
                    pixels[i] = pixels[i].max(value);
                }
            }
        }
    }

    let mut labels = Vec::new();
    for system in systems.iter().filter(|s| s.active_at(index)) {
        let scale = system.scale(index, cfg.dim_floor);
        let phase = system.phase_deg(index, cfg);
        let patch = render_comma(system.side, phase);
        let col_center = system.col_at(index, cfg);
        let top = (system.row_center - system.side as f64 / 2.0).round() as i64;
        let left = (col_center - system.side as f64 / 2.0).round() as i64;
        let s = system.side as usize;
        for pr in 0..s {
            let fr = top + pr as i64;
            if fr < 0 || fr >= h as i64 {
                continue;
            }
            for pc in 0..s {
                let fc = left + pc as i64;
                if fc < 0 || fc >= w as i64 {
                    continue;
                }
                if patch.mask[pr * s + pc] {
                    let value = (patch.intensity[pr * s + pc] as f64 * scale).clamp(0.0, 255.0);
                    let i = fr as usize * w + fc as usize;
                    pixels[i] = pixels[i].max(value as u8);
                }
            }
        }
        if let Some((sr, sc, extent)) = patch.support_square() {
            let bbox = BBox::clamped(left + sc, top + sr, extent, w, h)
                .expect("support square has positive extent");
            labels.push(LabeledCloud { timestamp: ts, bbox });
        }
    }

    let frame = Frame::new(w, h, pixels, ts).expect("dimensions are valid");
    (frame, labels)
}

/// Writes frames (P5 under `dir/frames`), labels, and storms in the
/// interchange formats.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<()> {
    let frames_dir = dir.join("frames");
    std::fs::create_dir_all(&frames_dir)?;
    for frame in &corpus.frames {
        pgm::save_frame(frame, &frames_dir)?;
    }
    write_labels_csv(&dir.join("labels.csv"), &corpus.labels)?;
    write_storms_csv(&dir.join("storms.csv"), &corpus.storms)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comma_patch_rotation_symmetry() {
        let a = render_comma(160, 0.0);
        let b = render_comma(160, 180.0);
        // Point rotation: mask(r, c) under 180 degrees equals
        // mask(side-1-r, side-1-c). Sampling at pixel centers makes this
        // exact.
        let s = 160usize;
        let mut mismatches = 0;
        for r in 0..s {
            for c in 0..s {
                if a.mask[r * s + c] != b.mask[(s - 1 - r) * s + (s - 1 - c)] {
                    mismatches += 1;
                }
            }
        }
        assert_eq!(mismatches, 0);
    }

    #[test]
    fn comma_mask_fraction_in_range_for_all_phases() {
        for phase in [0.0, 30.0, 75.0, 120.0, 200.0, 290.0] {
            let patch = render_comma(192, phase);
            let frac = patch.mask_fraction();
            assert!((0.25..=0.6).contains(&frac), "phase {phase}: fraction {frac}");
        }
    }

    #[test]
    fn comma_tight_box_mean_passes_intensity_filter() {
        for phase in [0.0, 45.0, 135.0, 270.0] {
            let patch = render_comma(224, phase);
            let (sr, sc, extent) = patch.support_square().unwrap();
            // Mean intensity over the tight support square.
            let s = patch.side as usize;
            let mut sum = 0.0;
            let mut count = 0usize;
            for r in sr.max(0)..(sr + extent as i64).min(s as i64) {
                for c in sc.max(0)..(sc + extent as i64).min(s as i64) {
                    sum += patch.intensity[r as usize * s + c as usize] as f64;
                    count += 1;
                }
            }
            let mean = sum / count as f64;
            assert!((50.0..=200.0).contains(&mean), "phase {phase}: mean {mean}");
        }
    }

    #[test]
    fn body_intensities_in_published_band() {
        let patch = render_comma(192, 30.0);
        for (i, &m) in patch.mask.iter().enumerate() {
            if m {
                let v = patch.intensity[i];
                assert!((210.0..=245.0).contains(&v), "value {v}");
            }
        }
    }

    #[test]
    fn empty_config_yields_background_only() {
        let cfg = SynthConfig {
            duration_hours: 12,
            systems_per_day: 0,
            clutter_per_day: 0,
            ..SynthConfig::default()
        };
        let corpus = generate_corpus(&cfg).unwrap();
        assert_eq!(corpus.frames.len(), 24);
        assert!(corpus.labels.is_empty());
        assert!(corpus.storms.is_empty());
        for frame in &corpus.frames {
            assert!(frame.pixels().iter().all(|&p| p < 200), "background pixel >= 200");
        }
    }

    #[test]
    fn corpus_is_deterministic() {
        let cfg = SynthConfig { duration_hours: 48, ..SynthConfig::default() };
        let a = generate_corpus(&cfg).unwrap();
        let b = generate_corpus(&cfg).unwrap();
        assert_eq!(a.frames.len(), b.frames.len());
        for (fa, fb) in a.frames.iter().zip(&b.frames) {
            assert_eq!(fa.pixels(), fb.pixels());
            assert_eq!(fa.timestamp, fb.timestamp);
        }
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.storms, b.storms);
    }

    #[test]
    fn labels_track_the_rendered_support() {
        let cfg = SynthConfig { duration_hours: 72, ..SynthConfig::default() };
        let corpus = generate_corpus(&cfg).unwrap();
        assert!(!corpus.labels.is_empty());
        let systems = plan_systems(&cfg);
        let mut checked = 0;
        for (i, ts) in (0..cfg.frame_count()).map(|i| (i, cfg.frame_timestamp(i))) {
            for system in systems.iter().filter(|s| s.active_at(i)) {
                let patch = render_comma(system.side, system.phase_deg(i, &cfg));
                let (sr, sc, extent) = patch.support_square().unwrap();
                let top = (system.row_center - system.side as f64 / 2.0).round() as i64;
                let left = (system.col_at(i, &cfg) - system.side as f64 / 2.0).round() as i64;
                let truth = BBox::clamped(left + sc, top + sr, extent, cfg.width, cfg.height)
                    .unwrap();
                let label = corpus
                    .labels
                    .iter()
                    .filter(|l| l.timestamp == ts)
                    .max_by(|a, b| {
                        a.bbox.iou(&truth).partial_cmp(&b.bbox.iou(&truth)).unwrap()
                    })
                    .expect("an active system must be labeled");
                assert!(
                    label.bbox.iou(&truth) >= 0.9,
                    "frame {i}: label {:?} vs support {truth:?}",
                    label.bbox
                );
                checked += 1;
            }
            if checked > 120 {
                break;
            }
        }
        assert!(checked > 20);
    }

    #[test]
    fn storms_lie_inside_spawn_label_boxes() {
        let cfg = SynthConfig { duration_hours: 96, ..SynthConfig::default() };
        let corpus = generate_corpus(&cfg).unwrap();
        assert!(!corpus.storms.is_empty());
        for storm in &corpus.storms {
            assert!(storm.duration_minutes() >= 30);
            let spawn_labels: Vec<&LabeledCloud> = corpus
                .labels
                .iter()
                .filter(|l| l.timestamp == storm.begin)
                .collect();
            assert!(
                spawn_labels.iter().any(|l| l.bbox.contains(storm.row, storm.col)),
                "storm at ({}, {}) from {} not inside any label box",
                storm.row,
                storm.col,
                storm.begin
            );
        }
    }

    #[test]
    fn planted_count_meets_the_default_target() {
        let cfg = SynthConfig::default();
        let systems = plan_systems(&cfg);
        assert!(systems.len() >= 50, "only {} systems planted", systems.len());
    }
}

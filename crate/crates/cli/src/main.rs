//! Command-line pipeline for comma-shaped cloud detection.
//!
//! Subcommands compose the library stages end to end:
//! `synth` writes a synthetic corpus, `train-bank` fits the segmentation
//! mixtures, `train-model` produces a self-contained model bundle, `detect`
//! emits detections CSV (plus overlays and pre-threshold candidates),
//! `eval` scores detections against labels and storm events, and
//! `baseline` runs the two intensity-threshold reference detectors.
//!
//! Exit codes: 0 ok, 1 runtime failure, 2 usage error.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use commadet::detector::{detections_from_csv, detections_to_csv, write_overlay, Detection};
use commadet::evaluation::{
    baseline_intensity, baseline_spatial_intensity, curve_to_csv, missing_rate_curve, EvalReport,
};
use commadet::imagery::{
    equalize_histogram, pgm, read_labels_csv, read_storms_csv, Frame, Validity,
};
use commadet::pipeline::{score_frames, train_bank, train_model};
use commadet::proposals::{DataPartition, Segment};
use commadet::synth::{generate_corpus, write_corpus};
use commadet::{GmmBank, ModelBundle};

use config::KvConfig;

#[derive(Parser)]
#[command(name = "commadet", version, about = "Comma-shaped cloud detection pipeline")]
struct Cli {
    /// Flat key=value configuration file; flags override file entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus (frames, labels.csv, storms.csv).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit the per-(hour, tile) mixture bank on the training partition.
    TrainBank {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Train on every frame instead of the leading train partition.
        #[arg(long)]
        all_frames: bool,
    },
    /// Train the full model and write a self-contained bundle.
    TrainModel {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Detect comma-shaped clouds over a frame directory.
    Detect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        p0: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Write per-frame overlays (rectangles burned at 255) here.
        #[arg(long)]
        overlay_dir: Option<PathBuf>,
        /// Also write every scored cascade survivor (pre-threshold).
        #[arg(long)]
        candidates_out: Option<PathBuf>,
        /// Restrict detection to the trailing test partition of the corpus.
        #[arg(long)]
        test_only: bool,
    },
    /// Evaluate detections against labels and storm events.
    Eval {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        storms: PathBuf,
        /// Frame directory; enables exact detections-per-frame and the
        /// missing-rate curve denominator.
        #[arg(long)]
        frames: Option<PathBuf>,
        /// Pre-threshold candidates from `detect --candidates-out`; enables
        /// the missing-rate curve.
        #[arg(long)]
        candidates: Option<PathBuf>,
        /// Comma-separated cutoff grid for the curve.
        #[arg(long, default_value = "0.50,0.51,0.52")]
        p0_grid: String,
        /// Write the text report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write curve samples as CSV here.
        #[arg(long)]
        curve_out: Option<PathBuf>,
    },
    /// Run an intensity-threshold baseline detector.
    Baseline {
        #[arg(long)]
        frames: PathBuf,
        /// `intensity` or `spatial-intensity`.
        #[arg(long)]
        method: String,
        /// Intensity threshold (the spatial method fixes 225 when omitted).
        #[arg(long)]
        i0: Option<u8>,
        /// Spatial/intensity weight for the spatial method.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Histogram-equalize frames before thresholding.
        #[arg(long)]
        equalize: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        test_only: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

/// Removes declared outputs unless the run commits them, so failed runs do
/// not leave partial artifacts behind.
struct OutputGuard {
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
    committed: bool,
}

impl OutputGuard {
    fn new() -> Self {
        OutputGuard { files: Vec::new(), dirs: Vec::new(), committed: false }
    }

    fn file(&mut self, path: &Path) -> PathBuf {
        self.files.push(path.to_path_buf());
        path.to_path_buf()
    }

    fn dir(&mut self, path: &Path) -> PathBuf {
        self.dirs.push(path.to_path_buf());
        path.to_path_buf()
    }

    fn commit(&mut self) {
        self.committed = true;
    }
}

impl Drop for OutputGuard {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for f in &self.files {
            let _ = std::fs::remove_file(f);
        }
        for d in &self.dirs {
            let _ = std::fs::remove_dir_all(d);
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let file_cfg = match &cli.config {
        Some(path) => KvConfig::load(path)?,
        None => KvConfig::default(),
    };
    match cli.command {
        Command::Synth { out, seed } => cmd_synth(&file_cfg, &out, seed),
        Command::TrainBank { frames, out, seed, all_frames } => {
            cmd_train_bank(&file_cfg, &frames, &out, seed, all_frames)
        }
        Command::TrainModel { frames, labels, bank, out, sigma, rounds, seed } => {
            cmd_train_model(&file_cfg, &frames, &labels, &bank, &out, sigma, rounds, seed)
        }
        Command::Detect { model, frames, p0, out, overlay_dir, candidates_out, test_only } => {
            cmd_detect(&file_cfg, &model, &frames, p0, &out, overlay_dir, candidates_out, test_only)
        }
        Command::Eval { detections, labels, storms, frames, candidates, p0_grid, out, curve_out } => {
            cmd_eval(&detections, &labels, &storms, frames, candidates, &p0_grid, out, curve_out)
        }
        Command::Baseline { frames, method, i0, lambda, out, equalize, seed, test_only } => {
            cmd_baseline(&file_cfg, &frames, &method, i0, lambda, &out, equalize, seed, test_only)
        }
    }
}

fn load_frames(dir: &Path) -> Result<Vec<Frame>> {
    let paths = pgm::list_frame_files(dir)
        .with_context(|| format!("listing frames in {}", dir.display()))?;
    if paths.is_empty() {
        bail!("no .pgm frames under {}", dir.display());
    }
    let mut frames = Vec::with_capacity(paths.len());
    for path in &paths {
        frames.push(pgm::load_frame(path).with_context(|| format!("loading {}", path.display()))?);
    }
    Ok(frames)
}

fn partition_of(frames: &[Frame], cfg: &commadet::PipelineConfig) -> Result<DataPartition> {
    let stamps: Vec<_> = frames.iter().map(|f| f.timestamp).collect();
    Ok(DataPartition::by_day_fractions(&stamps, cfg.train_frac, cfg.cv_frac)?)
}

fn cmd_synth(file_cfg: &KvConfig, out: &Path, seed: Option<u64>) -> Result<()> {
    let cfg = config::resolve_synth(file_cfg, seed)?;
    let mut guard = OutputGuard::new();
    std::fs::create_dir_all(out)?;
    guard.dir(&out.join("frames"));
    guard.file(&out.join("labels.csv"));
    guard.file(&out.join("storms.csv"));
    guard.file(&out.join("synth.config.txt"));
    let corpus = generate_corpus(&cfg)?;
    write_corpus(&corpus, out)?;
    std::fs::write(out.join("synth.config.txt"), config::echo_synth(&cfg))?;
    println!(
        "wrote {} frames, {} labels, {} storms ({} comma systems) to {}",
        corpus.frames.len(),
        corpus.labels.len(),
        corpus.storms.len(),
        corpus.planted_commas,
        out.display()
    );
    guard.commit();
    Ok(())
}

fn cmd_train_bank(
    file_cfg: &KvConfig,
    frames_dir: &Path,
    out: &Path,
    seed: Option<u64>,
    all_frames: bool,
) -> Result<()> {
    let cfg = config::resolve_pipeline(file_cfg, None, None, None, None, None, None, None, None, seed)?;
    let frames = load_frames(frames_dir)?;
    let selected: Vec<Frame> = if all_frames {
        frames
    } else {
        let partition = partition_of(&frames, &cfg)?;
        frames
            .into_iter()
            .filter(|f| partition.segment(f.timestamp) == Segment::Train)
            .collect()
    };
    let mut guard = OutputGuard::new();
    guard.file(out);
    let bank = train_bank(&selected, &cfg)?;
    std::fs::write(out, bank.to_text())?;
    write_config_echo(out, &config::echo_pipeline(&cfg), &mut guard)?;
    println!("trained bank with {} groups on {} frames", bank.len(), selected.len());
    guard.commit();
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train_model(
    file_cfg: &KvConfig,
    frames_dir: &Path,
    labels_path: &Path,
    bank_path: &Path,
    out: &Path,
    sigma: Option<f64>,
    rounds: Option<usize>,
    seed: Option<u64>,
) -> Result<()> {
    let cfg = config::resolve_pipeline(
        file_cfg, sigma, None, None, None, None, None, rounds, None, seed,
    )?;
    let frames = load_frames(frames_dir)?;
    let labels = read_labels_csv(labels_path)?;
    let bank = GmmBank::from_text(&std::fs::read_to_string(bank_path)?)?;
    let mut guard = OutputGuard::new();
    guard.file(out);
    let (bundle, report) = train_model(&frames, &labels, bank, &cfg)?;
    bundle.save(out)?;
    write_config_echo(out, &config::echo_pipeline(&cfg), &mut guard)?;
    println!("training samples: {} positive / {} negative windows", report.positives, report.negatives);
    println!(
        "patch classifier: train accuracy {:.4}, cv accuracy {:.4} (l2 {})",
        report.patch_train_accuracy, report.patch_cv_accuracy, bundle.patch.l2
    );
    println!(
        "weak classifiers (cv balanced accuracy): hog {:.4}, motion {:.4}",
        report.weak_hog_cv_balanced_accuracy, report.weak_motion_cv_balanced_accuracy
    );
    println!(
        "adaboost: {} rounds, cv balanced accuracy {:.4}",
        bundle.adaboost.rounds.len(),
        report.ensemble_cv_balanced_accuracy
    );
    guard.commit();
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_detect(
    file_cfg: &KvConfig,
    model: &Path,
    frames_dir: &Path,
    p0: Option<f64>,
    out: &Path,
    overlay_dir: Option<PathBuf>,
    candidates_out: Option<PathBuf>,
    test_only: bool,
) -> Result<()> {
    let bundle = ModelBundle::load(model)?;
    let cfg = config::resolve_pipeline(file_cfg, None, None, None, None, None, None, None, p0, None)?;
    let p0 = p0.or(file_cfg.get("p0")?).unwrap_or(bundle.default_p0);
    if !(0.0..1.0).contains(&p0) || p0 <= 0.0 {
        bail!("p0 must lie in (0, 1), got {p0}");
    }
    let frames = load_frames(frames_dir)?;
    let eval_from = if test_only {
        let partition = partition_of(&frames, &cfg)?;
        frames
            .iter()
            .position(|f| partition.segment(f.timestamp) == Segment::Test)
            .unwrap_or(0)
    } else {
        0
    };

    let mut guard = OutputGuard::new();
    guard.file(out);
    let (scored, diagnostics) = score_frames(&frames, &bundle);
    let eval_stamp = frames[eval_from].timestamp;
    let mut detections: Vec<Detection> = Vec::new();
    let mut candidates: Vec<Detection> = Vec::new();
    for fs in scored.iter().filter(|fs| fs.timestamp >= eval_stamp) {
        detections.extend(fs.detections(p0, bundle.nms_iou));
        candidates.extend(fs.candidates.iter().cloned());
    }
    for diag in &diagnostics {
        eprintln!("note: {diag}");
    }
    std::fs::write(out, detections_to_csv(&detections))?;
    if let Some(cand_path) = &candidates_out {
        guard.file(cand_path);
        std::fs::write(cand_path, detections_to_csv(&candidates))?;
    }
    if let Some(dir) = &overlay_dir {
        std::fs::create_dir_all(dir)?;
        for frame in frames.iter().filter(|f| f.timestamp >= eval_stamp) {
            if frame.validity != Validity::Ok {
                continue;
            }
            let frame_dets: Vec<Detection> = detections
                .iter()
                .filter(|d| d.timestamp == frame.timestamp)
                .cloned()
                .collect();
            if !frame_dets.is_empty() {
                let path = dir.join(format!("{}.pgm", frame.timestamp.file_stem()));
                write_overlay(frame, &frame_dets, &path)?;
            }
        }
    }
    write_config_echo(out, &config::echo_pipeline(&cfg), &mut guard)?;
    println!(
        "{} detections over {} scored frames (p0 {})",
        detections.len(),
        scored.iter().filter(|fs| fs.timestamp >= eval_stamp).count(),
        p0
    );
    guard.commit();
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    detections_path: &Path,
    labels_path: &Path,
    storms_path: &Path,
    frames_dir: Option<PathBuf>,
    candidates: Option<PathBuf>,
    p0_grid: &str,
    out: Option<PathBuf>,
    curve_out: Option<PathBuf>,
) -> Result<()> {
    let detections = detections_from_csv(&std::fs::read_to_string(detections_path)?)?;
    let labels = read_labels_csv(labels_path)?;
    let storms = read_storms_csv(storms_path)?;

    // Restrict ground truth to the frame range covered by the detections'
    // timestamps so partial runs evaluate cleanly.
    let frame_count = match &frames_dir {
        Some(dir) => pgm::list_frame_files(dir)?.len(),
        None => {
            let mut stamps: Vec<_> = detections.iter().map(|d| d.timestamp).collect();
            stamps.sort();
            stamps.dedup();
            stamps.len().max(1)
        }
    };

    let mut report = EvalReport::compute(&detections, &labels, &storms, frame_count);
    if let Some(cand_path) = &candidates {
        let cands = detections_from_csv(&std::fs::read_to_string(cand_path)?)?;
        let grid: Vec<f64> = p0_grid
            .split(',')
            .map(|t| t.trim().parse::<f64>().context("bad p0 grid entry"))
            .collect::<Result<Vec<f64>>>()?;
        // Rebuild per-frame scores from the flat candidate list.
        let mut by_frame: std::collections::BTreeMap<_, Vec<Detection>> = Default::default();
        for c in cands {
            by_frame.entry(c.timestamp).or_default().push(c);
        }
        let scored: Vec<commadet::detector::FrameScores> = by_frame
            .into_iter()
            .map(|(timestamp, candidates)| commadet::detector::FrameScores {
                timestamp,
                candidates,
            })
            .collect();
        report.curve = missing_rate_curve(&scored, &labels, &storms, &grid, 0.30);
        if let Some(path) = &curve_out {
            std::fs::write(path, curve_to_csv(&report.curve))?;
        }
    }
    let text = report.summary();
    match &out {
        Some(path) => std::fs::write(path, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_baseline(
    file_cfg: &KvConfig,
    frames_dir: &Path,
    method: &str,
    i0: Option<u8>,
    lambda: Option<f64>,
    out: &Path,
    equalize: bool,
    seed: Option<u64>,
    test_only: bool,
) -> Result<()> {
    let cfg = config::resolve_pipeline(file_cfg, None, None, None, None, None, None, None, None, seed)?;
    let frames = load_frames(frames_dir)?;
    let keep_from = if test_only {
        let partition = partition_of(&frames, &cfg)?;
        frames
            .iter()
            .position(|f| partition.segment(f.timestamp) == Segment::Test)
            .unwrap_or(0)
    } else {
        0
    };
    let mut guard = OutputGuard::new();
    guard.file(out);
    let mut boxes: Vec<Detection> = Vec::new();
    for frame in frames.iter().skip(keep_from) {
        if frame.validity != Validity::Ok {
            continue;
        }
        let working = if equalize { equalize_histogram(frame)? } else { frame.clone() };
        let frame_boxes = match method {
            "intensity" => baseline_intensity(&working, i0.unwrap_or(220), cfg.seed),
            "spatial-intensity" => {
                baseline_spatial_intensity(&working, i0.unwrap_or(225), lambda.unwrap_or(0.7), cfg.seed)
            }
            other => bail!("unknown baseline method {other:?} (use intensity or spatial-intensity)"),
        };
        boxes.extend(frame_boxes.into_iter().map(|bbox| Detection {
            bbox,
            proba: 1.0,
            timestamp: frame.timestamp,
        }));
    }
    std::fs::write(out, detections_to_csv(&boxes))?;
    println!("{} baseline boxes from {} frames", boxes.len(), frames.len() - keep_from);
    guard.commit();
    Ok(())
}

fn write_config_echo(main_output: &Path, echo: &str, guard: &mut OutputGuard) -> Result<()> {
    let mut path = main_output.to_path_buf();
    let name = path
        .file_name()
        .map(|n| format!("{}.config.txt", n.to_string_lossy()))
        .unwrap_or_else(|| "run.config.txt".into());
    path.set_file_name(name);
    guard.file(&path);
    std::fs::write(&path, echo)?;
    Ok(())
}

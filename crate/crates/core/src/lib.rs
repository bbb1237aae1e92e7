//! Comma-shaped cloud detection for geostationary satellite imagery.
//!
//! Mid-latitude cyclonic storm systems show up in infrared satellite images
//! as comma-shaped cloud shields: a rotating head, a tail extending east, and
//! a dark dry slot between them. This crate implements a full detection
//! pipeline for that pattern:
//!
//! 1. **Segmentation** — per-(hour, tile) Gaussian mixtures separate high
//!    cloud from land and low cloud, with AIC-selected component counts and a
//!    min-max filter smoothing the mixture bank ([`segmentation`]).
//! 2. **Motion** — a motion-prior correlation field scores how well each
//!    pixel's intensity history matches a fixed westward displacement, plus
//!    the classical two-frame cross-correlation baseline ([`motion`]).
//! 3. **Proposals** — a 21-scale sliding-window pyramid filtered by a
//!    three-stage cascade: mean intensity, a linear patch classifier, and
//!    correlation against the average comma template ([`proposals`]).
//! 4. **Features** — 324-dim segmented HOG and 27-bin motion histograms per
//!    surviving window ([`features`]).
//! 5. **Detection** — 100+100 logistic weak classifiers stacked by AdaBoost,
//!    thresholded and cleaned up with non-maximum suppression
//!    ([`learning`], [`detector`]).
//! 6. **Evaluation** — cloud/storm recall, missing-rate curves, and two
//!    intensity-threshold baselines with 2-D Gaussian box fitting
//!    ([`evaluation`]).
//!
//! A deterministic synthetic-corpus generator ([`synth`]) plants drifting,
//! rotating comma systems with ground-truth labels and co-located storm
//! events so every stage can be verified at desk scale. [`pipeline`] wires
//! the stages into train/detect entry points shared by the CLI and tests.

pub mod detector;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod imagery;
pub mod learning;
pub mod logistic;
pub mod motion;
pub mod pipeline;
pub mod proposals;
pub mod seeding;
pub mod segmentation;
pub mod synth;

pub use detector::Detection;
pub use error::{Error, Result};
pub use imagery::{BBox, Frame, LabeledCloud, StormEvent, Timestamp, Validity};
pub use learning::{AdaBoostModel, ModelBundle, StackedInput, WeakClassifier};
pub use motion::MotionField;
pub use pipeline::PipelineConfig;
pub use proposals::{DataPartition, Sample, SampleLabel, WindowPyramid};
pub use segmentation::{GmmBank, GmmParams, PixelGroupKey};
pub use synth::SynthConfig;

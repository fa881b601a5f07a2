//! Trajectory forecasting toolkit for basketball player tracking data.
//!
//! The pipeline runs from raw per-frame tracking logs to trained multi-modal
//! motion predictors and their evaluation reports:
//!
//! 1. [`ingest`] parses tracking files and segments them into half-court
//!    offensive possessions at a fixed 0.12 s sampling interval.
//! 2. [`dataset`] turns possessions into supervised samples (player/ball
//!    history windows plus shot clock in, future velocity profile out),
//!    splits them at possession granularity, and batches them.
//! 3. [`model`] holds the recurrent predictor that emits M candidate
//!    velocity profiles with selection probabilities, plus the constant
//!    location / constant velocity straw-man baselines.
//! 4. [`loss`] implements the multi-mode winner-takes-most training loss
//!    with its relaxed-delta annealing schedules.
//! 5. [`train`] runs Adam with l2 regularization and early stopping, both
//!    for the base model and for per-player fine-tuning.
//! 6. [`eval`] computes displacement/velocity error metrics, best-of-M
//!    selection, probability calibration, and acceleration realism reports.
//!
//! [`synth`] generates seeded synthetic possessions (a common stem that
//! forks into one of K branches) used by the test suite and demos, and
//! [`plot`] renders possessions and predictions as SVG court diagrams.
//!
//! Everything is deterministic given the seeds recorded in the artifacts;
//! all numeric state is `f64`.

pub mod archive;
pub mod court;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod loss;
pub mod model;
pub mod norm;
pub mod plot;
pub mod synth;
pub mod train;

pub use error::{Error, Result};

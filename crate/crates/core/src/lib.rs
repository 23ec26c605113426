//! Test-time augmentation for out-of-distribution detection.
//!
//! The crate is organised as a staged pipeline whose stages communicate
//! through plain files:
//!
//! * [`pack`] holds the on-disk data model: feature packs (penultimate
//!   features and logits for one split under one augmentation view), the
//!   classifier head, score files and fitted scorer archives.
//! * [`augment`] implements deterministic pixel-space transforms and their
//!   composition.
//! * [`scorers`] implements seven OOD scores, all oriented so that larger
//!   values mean "more out-of-distribution".
//! * [`metrics`] computes AUROC, FPR at a target TPR, thresholds, per-class
//!   breakdowns and renders result grids.
//! * [`synth`] generates synthetic feature packs with controllable
//!   representation drift.
//! * [`pipeline`] glues the stages together (image folders, grid runs).

pub mod augment;
pub mod error;
pub mod metrics;
pub mod pack;
pub mod pipeline;
pub mod scorers;
pub mod synth;

pub use error::{Error, ErrorKind, Result};

//! Label-noise-robust decoding of spike-train firing-rate matrices.
//!
//! The crate is organized along the data flow of the decoder:
//!
//! * [`spike`] turns per-unit spike timestamps into standardized 64×96
//!   firing-rate matrices and augments them.
//! * [`synthetic`] produces ground-truth-known datasets with controllable
//!   class-conditional label noise.
//! * [`mlp`] is the feedforward classifier with weighted cross-entropy and
//!   analytic gradients. It serves both as the main decoder and as the
//!   auxiliary model of the label-quality stage.
//! * [`cl`] estimates out-of-fold probabilities, the confident joint, label
//!   quality scores and label-error flags.
//! * [`weighting`] maps quality scores to per-sample loss weights
//!   (reweighting) or to a prune mask (pruning).
//! * [`harness`] runs cross-validation, reliable-test-set evaluation and
//!   pruning-ratio ablations, and [`metrics`] scores predictions.
//! * [`dataset`] holds the in-memory dataset and its on-disk directory
//!   format.

pub mod cl;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod mlp;
pub mod rng;
pub mod spike;
pub mod synthetic;
pub mod weighting;

pub use crate::dataset::LabeledDataset;
pub use crate::error::{Error, Result};

//! Multimodal process-monitoring pipeline for laser directed energy deposition.
//!
//! The crate covers the full chain from raw sensor streams to classifier
//! reports: acoustic-emission preprocessing and 72-feature window extraction,
//! melt-pool image segmentation and geometry descriptors, five-level feature
//! fusion (alignment, ANOVA selection, z-scoring, augmentation), a classifier
//! suite with ablation evaluation, and a deterministic synthetic-data
//! generator that provides ground truth for closed-loop verification.
//!
//! All heavy inner loops are data-parallel via rayon when the `parallel`
//! feature is enabled (the default) and fall back to sequential iteration
//! without it. Outputs are bit-identical either way.

pub mod ae;
pub mod error;
pub mod fusion;
pub mod io;
pub mod ml;
pub mod parallel;
pub mod pipeline;
pub mod rng;
pub mod signal;
pub mod synth;
pub mod vision;

pub use error::{Error, Result};

/// Tool version embedded in every output artifact.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

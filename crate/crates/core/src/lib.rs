//! Training-free selection of synthetic image/annotation pairs for semantic
//! segmentation.
//!
//! Samples pass two filters. [`pcs`] keeps images whose text similarity drops
//! when their patches are shuffled ([`imaging`]), and [`asf`] keeps, per
//! class-count group and per class, the annotations that agree best with a
//! reference mask ([`maskmetrics`]). [`pipeline`] chains the two and writes
//! the curated manifest.

pub mod asf;
pub mod cli;
pub mod embedding;
pub mod error;
pub mod fsutil;
pub mod imaging;
pub mod manifest;
pub mod maskmetrics;
pub mod parallel;
pub mod pcs;
pub mod pipeline;
pub mod synth;

pub use error::{Result, SdsError};

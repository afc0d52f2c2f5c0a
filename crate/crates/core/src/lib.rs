//! # meshband
//!
//! Hierarchical multi-resolution mesh networks for decoding task labels from
//! region-level time series.
//!
//! The pipeline runs in stages:
//! - [`wavelet`]: orthogonal dyadic filterbank; every region series is split
//!   into approximation and detail subbands `A0..AL, D1..DL`.
//! - [`mesh`]: per session and subband, each region is regressed on its `p`
//!   most correlated regions with a ridge penalty. The weights form a directed
//!   mesh network, flattened row-major into a feature vector.
//! - [`learn`]: one base classifier per subband, fused by a meta classifier
//!   trained on the concatenated class-membership vectors (fuzzy stacked
//!   generalization), plus majority-vote baselines.
//! - [`graphmetrics`] and [`analysis`]: topology, ensemble diversity and
//!   membership significance.
//! - [`synth`]: seeded synthetic datasets with planted subband connectivity,
//!   and slow reference implementations used for cross-checking.
//! - [`pipeline`]: configuration, caching and report emission.

pub mod analysis;
pub mod data;
mod error;
pub mod graphmetrics;
pub mod learn;
pub(crate) mod linalg;
pub mod mesh;
pub mod pipeline;
pub mod synth;
pub mod wavelet;

pub use error::{Error, Result};

/// Crate version recorded in every emitted artifact.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

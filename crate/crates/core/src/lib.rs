//! Align independently predicted, overlapping submaps (camera poses plus
//! pixel-aligned pointmaps) into one consistent trajectory and point cloud.

// `!(x > 0.0)` is used on purpose: it rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod bundle;
pub mod control_points;
pub mod deformation;
pub mod error;
pub mod evaluation;
pub mod export;
pub mod geometry;
pub mod pipeline;
pub mod prediction;
pub mod registration;
pub mod spatial;
pub mod synth;

pub use error::{Error, Result};

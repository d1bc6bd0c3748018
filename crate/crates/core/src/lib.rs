//! Stereo/monocular cost-volume fusion: census stereo and monocular-normal
//! correlation volumes, entropy confidence, joint scale/shift recovery of
//! monocular depth, fuzzy mirror truncation, and evaluation metrics.

// NaN-rejecting checks are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod features;
pub mod fusion;
pub mod guidance;
pub mod io;
pub mod losses;
pub mod map;
pub mod metrics;
pub mod numeric;
pub mod pipeline;
pub mod scaling;
pub mod scenes;
pub mod volume;

pub use error::{Error, ErrorClass, Result};
pub use map::{ConfidenceMap, FloatMap, Mask};

//! Online metric-depth calibration from robot kinematics.
//!
//! A monocular depth network only yields relative depth. Tracked keypoints on a
//! robot arm with known kinematics give metric depth at a handful of pixels per
//! frame; the estimators in [`estimation`] use them to keep a quadratic
//! relative-to-metric regressor calibrated online. [`control`] closes a reach
//! loop on the calibrated depth and [`simulator`] provides a synthetic world
//! with exact ground truth for all of it.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod error;
pub mod estimation;
pub mod kinematics;
pub mod parallel;
pub mod regressor;
pub mod simulator;

pub use error::{Error, Result};

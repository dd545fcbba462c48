use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regressor::DepthRegressorParams;

/// Ground-truth monotone map from metric depth `Z` to relative depth `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WarpModel {
    /// `r` such that `beta2 r^2 + beta1 r + beta0 = Z`, on the increasing branch.
    InverseQuadratic { beta: [f64; 3] },
    /// `r = a / Z + b`.
    Disparity { a: f64, b: f64 },
    /// `r = a Z + b`.
    Affine { a: f64, b: f64 },
}

impl WarpModel {
    pub fn name(&self) -> &'static str {
        match self {
            WarpModel::InverseQuadratic { .. } => "inverse_quadratic",
            WarpModel::Disparity { .. } => "disparity",
            WarpModel::Affine { .. } => "affine",
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            WarpModel::InverseQuadratic { beta } => beta.to_vec(),
            WarpModel::Disparity { a, b } | WarpModel::Affine { a, b } => vec![a, b],
        }
    }

    /// Same kind with parameters replaced, in [`WarpModel::params`] order.
    pub fn with_params(&self, p: &[f64]) -> Self {
        match self {
            WarpModel::InverseQuadratic { .. } => WarpModel::InverseQuadratic { beta: [p[0], p[1], p[2]] },
            WarpModel::Disparity { .. } => WarpModel::Disparity { a: p[0], b: p[1] },
            WarpModel::Affine { .. } => WarpModel::Affine { a: p[0], b: p[1] },
        }
    }

    pub fn apply(&self, z: f64) -> f64 {
        match *self {
            WarpModel::InverseQuadratic { beta: [b2, b1, b0] } => {
                let w = z - b0;
                if b2 == 0.0 {
                    w / b1
                } else {
                    // Cancellation-free form of (-b1 + sqrt(disc)) / (2 b2).
                    2.0 * w / (b1 + (b1 * b1 + 4.0 * b2 * w).sqrt())
                }
            }
            WarpModel::Disparity { a, b } => a / z + b,
            WarpModel::Affine { a, b } => a * z + b,
        }
    }

    /// The quadratic regressor that inverts this warp exactly, if one exists.
    pub fn matched_regressor(&self) -> Option<DepthRegressorParams> {
        match *self {
            WarpModel::InverseQuadratic { beta } => Some(DepthRegressorParams::new(beta[0], beta[1], beta[2])),
            WarpModel::Affine { a, b } => Some(DepthRegressorParams::new(0.0, 1.0 / a, -b / a)),
            WarpModel::Disparity { .. } => None,
        }
    }

    /// Checks strict monotonicity and finiteness on `[z_lo, z_hi]`.
    pub fn check_monotone(&self, z_lo: f64, z_hi: f64) -> Result<()> {
        if !(z_lo > 0.0 && z_hi >= z_lo && z_hi.is_finite()) {
            return Err(Error::Config(format!("bad depth range [{z_lo}, {z_hi}]")));
        }
        let ok = match *self {
            WarpModel::InverseQuadratic { beta: [b2, b1, b0] } => {
                // dr/dZ = 1 / sqrt(disc); disc is affine in Z so the endpoints suffice.
                let disc = |z: f64| b1 * b1 + 4.0 * b2 * (z - b0);
                b1 > 0.0 && disc(z_lo) > 0.0 && disc(z_hi) > 0.0
            }
            WarpModel::Disparity { a, .. } | WarpModel::Affine { a, .. } => a != 0.0,
        };
        let finite =
            self.params().iter().all(|v| v.is_finite()) && self.apply(z_lo).is_finite() && self.apply(z_hi).is_finite();
        if ok && finite {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "{} warp {:?} is not monotone on [{z_lo:.3}, {z_hi:.3}]",
                self.name(),
                self.params()
            )))
        }
    }
}

//! Online estimators of the depth-regressor coefficients.
//!
//! * [`kalman`]: linear-Gaussian filter with a random-walk motion model.
//! * [`LstmEstimator`]: recurrent network trained online on the kinematic
//!   observations.
//! * [`hybrid_step`]: Kalman filter whose predicted mean comes from the network.
//!
//! [`EstimatorState`] wraps all of them (plus a frozen static-scale baseline)
//! behind one per-frame `step`.

mod checkpoint;
mod huber;
pub mod kalman;
mod lstm;
pub mod network;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use checkpoint::Checkpoint;
pub use huber::{huber_grad, huber_loss};
pub use kalman::{kf_init, kf_init_with, kf_predict, kf_predict_with_mean, kf_update, KalmanBelief, KalmanConfig};
pub use lstm::{LossBreakdown, LstmEstimator, OptimizerKind, StepOutcome, TrainingConfig};
pub use network::{ForwardOutput, Network, NetworkShape};

use crate::error::{Error, Result};
use crate::kinematics::KeypointObservationSet;
use crate::regressor::DepthRegressorParams;

/// Forward pass of the recurrent estimator on an assembled input vector.
pub fn lstm_forward(e: &LstmEstimator, input: &nalgebra::DVector<f64>) -> Result<ForwardOutput> {
    e.forward(input)
}

/// One frame of online training; returns the committed coefficients.
pub fn lstm_train_step(
    e: &mut LstmEstimator,
    rel: &[f64],
    obs: &KeypointObservationSet,
) -> Result<DepthRegressorParams> {
    e.train_step(rel, obs).map(|o| o.beta)
}

/// Relative and metric depths of the visible keypoints, in keypoint order.
pub fn visible_pairs(rel: &[f64], obs: &KeypointObservationSet) -> (Vec<f64>, Vec<f64>) {
    obs.visible_indices().map(|i| (rel[i], obs.depths[i])).unzip()
}

/// Hybrid frame: train the network, use its coefficients as the predicted
/// mean of the filter, inflate the covariance, then apply the measurement
/// update. Returns the posterior mean.
pub fn hybrid_step(
    e: &mut LstmEstimator,
    b: &mut KalmanBelief,
    rel: &[f64],
    obs: &KeypointObservationSet,
) -> Result<DepthRegressorParams> {
    let learned = lstm_train_step(e, rel, obs)?;
    let predicted = kf_predict_with_mean(b, learned);
    let (r, o) = visible_pairs(rel, obs);
    *b = kf_update(&predicted, &r, &o)?;
    Ok(b.mean)
}

/// Estimation method selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Kf,
    Lstm,
    Hybrid,
    StaticScale,
    ExternalBaseline,
}

impl Method {
    pub const ALL: [Method; 5] =
        [Method::Kf, Method::Lstm, Method::Hybrid, Method::StaticScale, Method::ExternalBaseline];

    pub fn name(self) -> &'static str {
        match self {
            Method::Kf => "kf",
            Method::Lstm => "lstm",
            Method::Hybrid => "hybrid",
            Method::StaticScale => "static_scale",
            Method::ExternalBaseline => "external_baseline",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub kalman: KalmanConfig,
    pub training: TrainingConfig,
}

/// Per-method estimator session.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorState {
    Kalman(KalmanBelief),
    Lstm {
        lstm: LstmEstimator,
        beta: DepthRegressorParams,
    },
    Hybrid {
        lstm: LstmEstimator,
        kalman: KalmanBelief,
    },
    /// Scale and offset fitted on the first frame with observations, then frozen.
    StaticScale(Option<DepthRegressorParams>),
}

impl EstimatorState {
    pub fn new(method: Method, keypoints: usize, cfg: &EstimatorConfig) -> Result<Self> {
        Ok(match method {
            Method::Kf => EstimatorState::Kalman(kf_init_with(&cfg.kalman)),
            Method::Lstm => EstimatorState::Lstm {
                lstm: LstmEstimator::new(keypoints, cfg.training)?,
                beta: DepthRegressorParams::IDENTITY,
            },
            Method::Hybrid => EstimatorState::Hybrid {
                lstm: LstmEstimator::new(keypoints, cfg.training)?,
                kalman: kf_init_with(&cfg.kalman),
            },
            Method::StaticScale => EstimatorState::StaticScale(None),
            Method::ExternalBaseline => return Err(Error::Config("external baseline has no online estimator".into())),
        })
    }

    pub fn method(&self) -> Method {
        match self {
            EstimatorState::Kalman(_) => Method::Kf,
            EstimatorState::Lstm { .. } => Method::Lstm,
            EstimatorState::Hybrid { .. } => Method::Hybrid,
            EstimatorState::StaticScale(_) => Method::StaticScale,
        }
    }

    /// Latest coefficient estimate.
    pub fn beta(&self) -> DepthRegressorParams {
        match self {
            EstimatorState::Kalman(b) => b.mean,
            EstimatorState::Lstm { beta, .. } => *beta,
            EstimatorState::Hybrid { kalman, .. } => kalman.mean,
            EstimatorState::StaticScale(b) => b.unwrap_or(DepthRegressorParams::IDENTITY),
        }
    }

    /// Processes one frame. Frames without visible keypoints leave the
    /// estimate unchanged (the filter still inflates its covariance).
    pub fn step(&mut self, rel: &[f64], obs: &KeypointObservationSet) -> Result<DepthRegressorParams> {
        let any_visible = obs.visible_count() > 0;
        match self {
            EstimatorState::Kalman(b) => {
                let predicted = kf_predict(b);
                *b = if any_visible {
                    let (r, o) = visible_pairs(rel, obs);
                    kf_update(&predicted, &r, &o)?
                } else {
                    predicted
                };
            }
            EstimatorState::Lstm { lstm, beta } => {
                if any_visible {
                    *beta = lstm_train_step(lstm, rel, obs)?;
                }
            }
            EstimatorState::Hybrid { lstm, kalman } => {
                if any_visible {
                    hybrid_step(lstm, kalman, rel, obs)?;
                }
            }
            EstimatorState::StaticScale(frozen) => {
                if frozen.is_none() && any_visible {
                    let (r, o) = visible_pairs(rel, obs);
                    *frozen = Some(fit_scale(&r, &o));
                }
            }
        }
        Ok(self.beta())
    }
}

/// Least-squares scale through the origin, `z = s r`. Degenerate input gives `s = 1`.
pub fn fit_scale(rel: &[f64], depths: &[f64]) -> DepthRegressorParams {
    let rr: f64 = rel.iter().map(|r| r * r).sum();
    let rz: f64 = rel.iter().zip(depths).map(|(r, z)| r * z).sum();
    let s = if rr > 0.0 { rz / rr } else { 1.0 };
    DepthRegressorParams::new(0.0, s, 0.0)
}

#[cfg(test)]
mod tests;

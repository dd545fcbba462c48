//! Kalman filter over the regressor coefficients.
//!
//! The coefficients follow a random walk and every visible keypoint contributes
//! one scalar measurement `o_i = [r_i^2, r_i, 1] . beta + noise`.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regressor::{design_row, DepthRegressorParams};

/// Noise settings for the coefficient filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanConfig {
    /// Diagonal of the initial covariance.
    pub initial_variance: f64,
    /// Diagonal of the per-frame random-walk covariance.
    pub motion_variance: f64,
    /// Variance of each depth observation.
    pub observation_variance: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self { initial_variance: 1.0, motion_variance: 0.5, observation_variance: 0.03 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KalmanBelief {
    pub mean: DepthRegressorParams,
    pub covariance: Matrix3<f64>,
    pub sigma0: Matrix3<f64>,
    pub sigma_motion: Matrix3<f64>,
    pub sigma_obs: f64,
}

/// Fresh belief: identity scale with the configured covariances.
pub fn kf_init() -> KalmanBelief {
    kf_init_with(&KalmanConfig::default())
}

pub fn kf_init_with(cfg: &KalmanConfig) -> KalmanBelief {
    let sigma0 = Matrix3::identity() * cfg.initial_variance;
    KalmanBelief {
        mean: DepthRegressorParams::IDENTITY,
        covariance: sigma0,
        sigma0,
        sigma_motion: Matrix3::identity() * cfg.motion_variance,
        sigma_obs: cfg.observation_variance,
    }
}

/// Random-walk prediction: mean kept, covariance inflated by the motion noise.
pub fn kf_predict(b: &KalmanBelief) -> KalmanBelief {
    let mut out = b.clone();
    out.covariance = symmetrize(&(b.covariance + b.sigma_motion));
    out
}

/// Prediction around an externally supplied mean (the learned motion model).
pub fn kf_predict_with_mean(b: &KalmanBelief, mean: DepthRegressorParams) -> KalmanBelief {
    let mut out = kf_predict(b);
    out.mean = mean;
    out
}

/// Measurement update with the relative depths `rel[k]` and metric depths
/// `depths[k]` of the visible keypoints.
pub fn kf_update(b: &KalmanBelief, rel: &[f64], depths: &[f64]) -> Result<KalmanBelief> {
    if rel.len() != depths.len() {
        return Err(Error::Arity { expected: depths.len(), got: rel.len() });
    }
    let m = rel.len();
    if m == 0 {
        return Err(Error::NoObservation);
    }
    if rel.iter().chain(depths).any(|v| !v.is_finite()) {
        return Err(Error::Domain("observation contains non-finite values".into()));
    }

    let mut h = DMatrix::<f64>::zeros(m, 3);
    for (i, &r) in rel.iter().enumerate() {
        let row = design_row(r);
        h.set_row(i, &row.transpose());
    }
    let p = DMatrix::from_column_slice(3, 3, b.covariance.as_slice());
    let beta = DVector::from_column_slice(b.mean.to_vector().as_slice());
    let obs = DVector::from_column_slice(depths);

    let innovation = &obs - &h * &beta;
    let pht = &p * h.transpose();
    let mut s = &h * &pht;
    for i in 0..m {
        s[(i, i)] += b.sigma_obs;
    }
    let s = (&s + s.transpose()) * 0.5;
    let chol = s.clone().cholesky().ok_or(Error::Conditioning)?;
    // Reject gains built from a numerically singular innovation covariance.
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    if !(lo > 0.0) || (hi / lo).powi(2) > 1e14 {
        return Err(Error::Conditioning);
    }
    // K = P H^T S^-1, computed as (S^-1 H P)^T since S and P are symmetric.
    let gain = chol.solve(&pht.transpose()).transpose();

    let new_mean = &beta + &gain * innovation;
    // Joseph form keeps the covariance symmetric positive semi-definite.
    let ikh = DMatrix::<f64>::identity(3, 3) - &gain * &h;
    let joseph = &ikh * &p * ikh.transpose() + &gain * gain.transpose() * b.sigma_obs;

    let mut out = b.clone();
    out.mean = DepthRegressorParams::new(new_mean[0], new_mean[1], new_mean[2]);
    out.covariance = symmetrize(&Matrix3::from_iterator(joseph.iter().copied()));
    if !out.mean.is_finite() || out.covariance.iter().any(|v| !v.is_finite()) {
        return Err(Error::Conditioning);
    }
    Ok(out)
}

fn symmetrize(m: &Matrix3<f64>) -> Matrix3<f64> {
    (m + m.transpose()) * 0.5
}

impl KalmanBelief {
    pub fn covariance_eigenvalues(&self) -> Vector3<f64> {
        self.covariance.symmetric_eigenvalues()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regressor::{fit_least_squares_quadratic, DepthPairSet};

    #[test]
    fn init_is_identity_scale() {
        let b = kf_init();
        assert_eq!(b.mean, DepthRegressorParams::new(0.0, 1.0, 0.0));
        assert_eq!(b.covariance, Matrix3::identity());
        assert_eq!(b.sigma_motion, Matrix3::identity() * 0.5);
        assert_eq!(b.sigma_obs, 0.03);
        assert_eq!(crate::regressor::eval_regressor(&b.mean, 0.42).unwrap(), 0.42);
    }

    #[test]
    fn predict_inflates_additively() {
        let b = kf_init();
        let p1 = kf_predict(&b);
        assert_eq!(p1.covariance, Matrix3::identity() * 1.5);
        assert_eq!(p1.mean, b.mean);
        let p2 = kf_predict(&p1);
        let mut double = b.clone();
        double.sigma_motion *= 2.0;
        assert!((p2.covariance - kf_predict(&double).covariance).amax() < 1e-15);
    }

    #[test]
    fn zero_innovation_keeps_mean() {
        let mut b = kf_init();
        b.mean = DepthRegressorParams::new(0.3, 0.8, 0.2);
        let r = 0.6;
        let o = b.mean.apply(r);
        let post = kf_update(&b, &[r], &[o]).unwrap();
        assert!(post.mean.max_abs_diff(&b.mean) < 1e-12);
    }

    #[test]
    fn scalar_gain_closed_form() {
        // P = I, sigma_o^2 = 0.03, r = 1: K = [1, 1, 1]^T / 3.03.
        let b = kf_init();
        let innovation = 0.7;
        let o = b.mean.apply(1.0) + innovation;
        let post = kf_update(&b, &[1.0], &[o]).unwrap();
        let k = 1.0 / 3.03;
        let expect = b.mean.to_vector() + Vector3::repeat(k * innovation);
        assert!((post.mean.to_vector() - expect).amax() < 1e-14);
        let expect_p = Matrix3::identity() - Matrix3::repeat(1.0 / 3.03);
        assert!((post.covariance - expect_p).amax() < 1e-14);
    }

    #[test]
    fn no_observation_is_error() {
        assert!(matches!(kf_update(&kf_init(), &[], &[]), Err(Error::NoObservation)));
        assert!(kf_update(&kf_init(), &[0.1], &[]).is_err());
    }

    #[test]
    fn converges_to_batch_fit_on_noiseless_data() {
        let truth = DepthRegressorParams::new(0.5, 1.2, 0.1);
        let rs = [0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
        let ls =
            fit_least_squares_quadratic(&DepthPairSet::new(rs.iter().map(|&r| (r, truth.apply(r))).collect()).unwrap())
                .unwrap();
        let mut b = kf_init();
        for t in 0..200 {
            b = kf_predict(&b);
            let sel: Vec<f64> = (0..5).map(|k| rs[(t + k * 3) % rs.len()]).collect();
            let o: Vec<f64> = sel.iter().map(|&r| truth.apply(r)).collect();
            b = kf_update(&b, &sel, &o).unwrap();
        }
        assert!(b.mean.max_abs_diff(&truth) < 1e-3, "{:?}", b.mean);
        assert!(b.mean.max_abs_diff(&ls) < 1e-3);
    }

    #[test]
    fn update_shrinks_covariance() {
        let mut b = kf_predict(&kf_init());
        for (i, r) in [0.3, 0.9, 1.4, 0.5].iter().enumerate() {
            let post = kf_update(&b, &[*r, r * 0.5 + 0.1], &[1.0, 0.7]).unwrap();
            let diff = b.covariance - post.covariance;
            assert!(diff.symmetric_eigenvalues().min() >= -1e-12, "step {i}");
            assert!(post.covariance.trace() <= b.covariance.trace());
            assert!((post.covariance - post.covariance.transpose()).amax() <= 1e-12);
            assert!(post.covariance_eigenvalues().min() >= -1e-12);
            b = kf_predict(&post);
        }
    }
}

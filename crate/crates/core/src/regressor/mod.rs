//! Quadratic relative-to-metric depth regressor and batch fitting.
//!
//! Metric depth is modelled as `z = beta2 * r^2 + beta1 * r + beta0` where `r` is
//! the relative depth reported by a monocular depth network. The online
//! estimators in [`crate::estimation`] track the coefficient vector; this module
//! owns the map itself, a batch least-squares oracle, and the regressor-family
//! comparison used to justify the quadratic form.

mod family;
mod pairs;

pub use family::{fit_family, fit_percentage, FamilyFit, FamilyKind, LmOptions, RegressorFamily};
pub use pairs::DepthPairSet;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients of the quadratic depth regressor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthRegressorParams {
    pub beta2: f64,
    pub beta1: f64,
    /// Constant offset in meters.
    pub beta0: f64,
}

impl DepthRegressorParams {
    pub const IDENTITY: Self = Self { beta2: 0.0, beta1: 1.0, beta0: 0.0 };

    pub fn new(beta2: f64, beta1: f64, beta0: f64) -> Self {
        Self { beta2, beta1, beta0 }
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    /// `[beta2, beta1, beta0]`, the layout used by the observation row `[r^2, r, 1]`.
    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.beta2, self.beta1, self.beta0)
    }

    pub fn is_finite(&self) -> bool {
        self.beta2.is_finite() && self.beta1.is_finite() && self.beta0.is_finite()
    }

    /// Evaluates the regressor without input validation.
    #[inline]
    pub fn apply(&self, r: f64) -> f64 {
        (self.beta2 * r + self.beta1) * r + self.beta0
    }

    /// Largest absolute coefficient difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (self.to_vector() - other.to_vector()).amax()
    }
}

impl Default for DepthRegressorParams {
    fn default() -> Self {
        Self::IDENTITY
    }
}

/// Observation row `[r^2, r, 1]` for a relative depth `r`.
#[inline]
pub fn design_row(r: f64) -> Vector3<f64> {
    Vector3::new(r * r, r, 1.0)
}

/// Evaluates the regressor at relative depth `r`.
pub fn eval_regressor(beta: &DepthRegressorParams, r: f64) -> Result<f64> {
    if !r.is_finite() {
        return Err(Error::Domain(format!("relative depth {r} is not finite")));
    }
    if !beta.is_finite() {
        return Err(Error::Domain("regressor coefficients are not finite".into()));
    }
    Ok(beta.apply(r))
}

/// Ordinary least-squares fit of the quadratic regressor.
///
/// Solved through the normal equations on a centred and scaled abscissa, then
/// mapped back to the raw coefficients, which keeps the system well conditioned
/// for relative depths far from zero.
pub fn fit_least_squares_quadratic(data: &DepthPairSet) -> Result<DepthRegressorParams> {
    let pairs = data.pairs();
    let distinct = distinct_count(pairs.iter().map(|p| p.0));
    if distinct < 3 {
        return Err(Error::SingularFit(format!("need at least 3 distinct relative depths, got {distinct}")));
    }

    let n = pairs.len() as f64;
    let mean = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let scale = pairs.iter().map(|p| (p.0 - mean).abs()).fold(0.0_f64, f64::max);
    if scale == 0.0 {
        return Err(Error::SingularFit("relative depths have zero spread".into()));
    }

    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for &(r, z) in pairs {
        let s = (r - mean) / scale;
        let row = design_row(s);
        ata += row * row.transpose();
        atb += row * z;
    }
    let chol = ata.cholesky().ok_or_else(|| Error::SingularFit("normal equations are not positive definite".into()))?;
    let c = chol.solve(&atb);
    // One step of iterative refinement against the normal-equation residual.
    let c = c + chol.solve(&(atb - ata * c));

    // z = c2 s^2 + c1 s + c0 with s = (r - m) / k
    let (c2, c1, c0) = (c[0], c[1], c[2]);
    let k = scale;
    let m = mean;
    let beta2 = c2 / (k * k);
    let beta1 = c1 / k - 2.0 * c2 * m / (k * k);
    let beta0 = c0 - c1 * m / k + c2 * m * m / (k * k);
    Ok(DepthRegressorParams::new(beta2, beta1, beta0))
}

/// Sum of squared residuals of the regressor over a pair set.
pub fn sum_squared_residuals(beta: &DepthRegressorParams, data: &DepthPairSet) -> f64 {
    data.pairs()
        .iter()
        .map(|&(r, z)| {
            let e = beta.apply(r) - z;
            e * e
        })
        .sum()
}

pub(crate) fn distinct_count(values: impl Iterator<Item = f64>) -> usize {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v.dedup();
    v.len()
}

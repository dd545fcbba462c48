//! Alternative regressor families and a small Levenberg-Marquardt fitter.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{distinct_count, DepthPairSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    /// `a * exp(-(r - b)^2 / (2 c^2))`
    Gaussian,
    /// `a * ln(r) + b`
    Logarithmic,
    /// `a * r^b`
    PowerLaw,
    /// `a / (r + b)`
    Rational,
    /// `a * r + b`
    Linear,
    /// `c2 * r^2 + c1 * r + c0`
    Polynomial2,
}

impl FamilyKind {
    pub const ALL: [FamilyKind; 6] = [
        FamilyKind::Gaussian,
        FamilyKind::Logarithmic,
        FamilyKind::PowerLaw,
        FamilyKind::Rational,
        FamilyKind::Linear,
        FamilyKind::Polynomial2,
    ];

    pub fn arity(self) -> usize {
        match self {
            FamilyKind::Gaussian | FamilyKind::Polynomial2 => 3,
            _ => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Gaussian => "gaussian",
            FamilyKind::Logarithmic => "logarithmic",
            FamilyKind::PowerLaw => "power_law",
            FamilyKind::Rational => "rational",
            FamilyKind::Linear => "linear",
            FamilyKind::Polynomial2 => "polynomial2",
        }
    }

    fn needs_positive_r(self) -> bool {
        matches!(self, FamilyKind::Logarithmic | FamilyKind::PowerLaw)
    }

    /// Value and parameter gradient at `r`.
    fn eval(self, p: &[f64], r: f64, grad: &mut [f64]) -> f64 {
        match self {
            FamilyKind::Gaussian => {
                let (a, b, c) = (p[0], p[1], p[2]);
                let d = r - b;
                let e = (-d * d / (2.0 * c * c)).exp();
                grad[0] = e;
                grad[1] = a * e * d / (c * c);
                grad[2] = a * e * d * d / (c * c * c);
                a * e
            }
            FamilyKind::Logarithmic => {
                let l = r.ln();
                grad[0] = l;
                grad[1] = 1.0;
                p[0] * l + p[1]
            }
            FamilyKind::PowerLaw => {
                let pw = r.powf(p[1]);
                grad[0] = pw;
                grad[1] = p[0] * pw * r.ln();
                p[0] * pw
            }
            FamilyKind::Rational => {
                let den = r + p[1];
                grad[0] = 1.0 / den;
                grad[1] = -p[0] / (den * den);
                p[0] / den
            }
            FamilyKind::Linear => {
                grad[0] = r;
                grad[1] = 1.0;
                p[0] * r + p[1]
            }
            FamilyKind::Polynomial2 => {
                grad[0] = r * r;
                grad[1] = r;
                grad[2] = 1.0;
                (p[0] * r + p[1]) * r + p[2]
            }
        }
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FamilyKind::ALL
            .into_iter()
            .find(|k| k.name() == s || (s == "power-law" && *k == FamilyKind::PowerLaw))
            .ok_or_else(|| Error::Config(format!("unknown regressor family `{s}`")))
    }
}

/// A fitted member of a regressor family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorFamily {
    pub kind: FamilyKind,
    pub params: Vec<f64>,
}

impl RegressorFamily {
    pub fn new(kind: FamilyKind, params: Vec<f64>) -> Result<Self> {
        if params.len() != kind.arity() {
            return Err(Error::Arity { expected: kind.arity(), got: params.len() });
        }
        Ok(Self { kind, params })
    }

    pub fn eval(&self, r: f64) -> f64 {
        let mut g = [0.0; 3];
        self.kind.eval(&self.params, r, &mut g)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilyFit {
    pub family: RegressorFamily,
    pub fit_percentage: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub initial_damping: f64,
    pub max_iterations: usize,
    /// Relative cost change below which an accepted step counts as converged.
    pub cost_tolerance: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { initial_damping: 1e-3, max_iterations: 200, cost_tolerance: 1e-10 }
    }
}

/// Fits a regressor family to the pairs and scores it with [`fit_percentage`].
pub fn fit_family(kind: FamilyKind, data: &DepthPairSet) -> Result<FamilyFit> {
    fit_family_with(kind, data, &LmOptions::default())
}

pub fn fit_family_with(kind: FamilyKind, data: &DepthPairSet, opts: &LmOptions) -> Result<FamilyFit> {
    if kind.needs_positive_r() {
        if let Some(r) = data.relative().find(|&r| r <= 0.0) {
            return Err(Error::Domain(format!("{kind} family needs positive relative depths, found {r}")));
        }
    }
    if distinct_count(data.relative()) < kind.arity() {
        return Err(Error::SingularFit(format!(
            "{kind} family needs at least {} distinct relative depths",
            kind.arity()
        )));
    }
    let init = initial_guess(kind, data)?;
    let (params, iterations) = levenberg_marquardt(kind, data, init, opts)?;
    let family = RegressorFamily::new(kind, params)?;
    let predicted: Vec<f64> = data.relative().map(|r| family.eval(r)).collect();
    let truth: Vec<f64> = data.metric().collect();
    let fit_percentage = fit_percentage(&predicted, &truth)?;
    Ok(FamilyFit { family, fit_percentage, iterations })
}

/// `100 * max(0, 1 - RMSE / std(truth))`, with the population standard deviation.
pub fn fit_percentage(predicted: &[f64], truth: &[f64]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::Arity { expected: truth.len(), got: predicted.len() });
    }
    if truth.is_empty() {
        return Err(Error::DegenerateMetric("no samples".into()));
    }
    let n = truth.len() as f64;
    let mean = truth.iter().sum::<f64>() / n;
    let var = truth.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n;
    if var <= 0.0 {
        return Err(Error::DegenerateMetric("truth has zero variance".into()));
    }
    let mse = predicted.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n;
    if !mse.is_finite() {
        return Ok(0.0);
    }
    Ok(100.0 * (1.0 - mse.sqrt() / var.sqrt()).max(0.0))
}

fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return Err(Error::SingularFit("abscissa has zero spread".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

fn initial_guess(kind: FamilyKind, data: &DepthPairSet) -> Result<Vec<f64>> {
    let rs: Vec<f64> = data.relative().collect();
    let zs: Vec<f64> = data.metric().collect();
    let (slope, _) = linear_fit(&rs, &zs)?;
    Ok(match kind {
        FamilyKind::Linear | FamilyKind::Logarithmic => vec![slope, 0.0],
        FamilyKind::Polynomial2 => vec![0.0, slope, 0.0],
        FamilyKind::PowerLaw => vec![slope, 1.0],
        // 1/z = r/a + b/a is linear in r.
        FamilyKind::Rational => {
            let inv: Vec<f64> = zs.iter().map(|z| 1.0 / z).collect();
            let (s, i) = linear_fit(&rs, &inv)?;
            if s.abs() < 1e-12 {
                vec![slope, 0.0]
            } else {
                vec![1.0 / s, i / s]
            }
        }
        FamilyKind::Gaussian => {
            let (imax, zmax) =
                zs.iter().copied().enumerate().fold((0, f64::MIN), |acc, (i, z)| if z > acc.1 { (i, z) } else { acc });
            let lo = rs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = rs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            vec![zmax, rs[imax], (hi - lo).max(1e-6)]
        }
    })
}

fn cost(kind: FamilyKind, data: &DepthPairSet, p: &[f64]) -> f64 {
    let mut g = [0.0; 3];
    let c: f64 = data
        .pairs()
        .iter()
        .map(|&(r, z)| {
            let e = kind.eval(p, r, &mut g) - z;
            e * e
        })
        .sum();
    if c.is_finite() {
        0.5 * c
    } else {
        f64::INFINITY
    }
}

fn levenberg_marquardt(
    kind: FamilyKind,
    data: &DepthPairSet,
    init: Vec<f64>,
    opts: &LmOptions,
) -> Result<(Vec<f64>, usize)> {
    let k = kind.arity();
    let n = data.len();
    let mut p = init;
    let mut lambda = opts.initial_damping;
    let mut current = cost(kind, data, &p);
    let scale: f64 = data.metric().map(|z| z * z).sum::<f64>().max(1e-300);
    let mut g = [0.0; 3];

    for iter in 1..=opts.max_iterations {
        if current <= 1e-30 * scale {
            return Ok((p, iter - 1));
        }
        let mut jac = DMatrix::<f64>::zeros(n, k);
        let mut res = DVector::<f64>::zeros(n);
        for (i, &(r, z)) in data.pairs().iter().enumerate() {
            res[i] = kind.eval(&p, r, &mut g) - z;
            for j in 0..k {
                jac[(i, j)] = g[j];
            }
        }
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &res;
        if jtr.amax() <= 1e-15 * scale.sqrt() {
            return Ok((p, iter));
        }

        // Inner loop: raise damping until a step lowers the cost.
        loop {
            let mut a = jtj.clone();
            for j in 0..k {
                a[(j, j)] += lambda * jtj[(j, j)].max(1e-12);
            }
            let step = a.cholesky().map(|c| c.solve(&(-&jtr)));
            if let Some(step) = step {
                let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
                let trial_cost = cost(kind, data, &trial);
                if trial_cost < current {
                    let rel = (current - trial_cost) / current;
                    p = trial;
                    current = trial_cost;
                    lambda = (lambda / 10.0).max(1e-15);
                    if rel < opts.cost_tolerance {
                        return Ok((p, iter));
                    }
                    break;
                }
            }
            lambda *= 10.0;
            if lambda > 1e16 {
                // No descent direction left at working precision.
                return Ok((p, iter));
            }
        }
    }
    Err(Error::Convergence { iterations: opts.max_iterations, last: p })
}

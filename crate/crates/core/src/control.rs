//! Reach control on calibrated depth.
//!
//! Goal and end-effector positions are both back-projected through the current
//! regressor, so a common depth bias largely cancels in `x - g`. The plant is
//! the additive model `x_{t+1} = x_t + u_t` and the gain comes from the
//! infinite-horizon LQR for `A = B = I`.

use std::fmt;
use std::io::Write;
use std::path::Path;

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::CameraModel;
use crate::regressor::{eval_regressor, DepthRegressorParams};

const RICCATI_TOLERANCE: f64 = 1e-12;
const RICCATI_MAX_SWEEPS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlConfig {
    pub q: Matrix3<f64>,
    pub r: Matrix3<f64>,
    pub goal_pixel: Vector2<f64>,
    pub success_epsilon: f64,
    /// Per-axis bound on `u`, meters per step.
    pub action_limit: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            q: Matrix3::identity(),
            r: Matrix3::identity() * 0.1,
            goal_pixel: Vector2::new(320.0, 240.0),
            success_epsilon: 0.02,
            action_limit: 0.05,
        }
    }
}

impl ControlConfig {
    pub fn validate(&self) -> Result<()> {
        check_symmetric(&self.q, "Q")?;
        check_symmetric(&self.r, "R")?;
        if self.q.symmetric_eigenvalues().min() < -1e-12 {
            return Err(Error::Domain("Q must be positive semidefinite".into()));
        }
        if self.r.cholesky().is_none() {
            return Err(Error::Domain("R must be positive definite".into()));
        }
        if !(self.success_epsilon > 0.0) {
            return Err(Error::Config("success_epsilon must be positive".into()));
        }
        if !(self.action_limit > 0.0) {
            return Err(Error::Config("action_limit must be positive".into()));
        }
        if !self.goal_pixel.iter().all(|v| v.is_finite()) {
            return Err(Error::Config("goal pixel must be finite".into()));
        }
        Ok(())
    }
}

fn check_symmetric(m: &Matrix3<f64>, name: &str) -> Result<()> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::Domain(format!("{name} has non-finite entries")));
    }
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-12 * scale {
        return Err(Error::Domain(format!("{name} must be symmetric")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlStatus {
    Tracking,
    InvalidGoal,
    InvalidState,
}

impl ControlStatus {
    pub fn name(self) -> &'static str {
        match self {
            ControlStatus::Tracking => "tracking",
            ControlStatus::InvalidGoal => "invalid_goal",
            ControlStatus::InvalidState => "invalid_state",
        }
    }
}

impl fmt::Display for ControlStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlState {
    pub x: Vector3<f64>,
    pub g: Vector3<f64>,
    pub u: Vector3<f64>,
    pub gain: Matrix3<f64>,
    pub status: ControlStatus,
}

impl ControlState {
    pub fn new(cfg: &ControlConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            x: Vector3::zeros(),
            g: Vector3::zeros(),
            u: Vector3::zeros(),
            gain: solve_lqr(&cfg.q, &cfg.r)?,
            status: ControlStatus::Tracking,
        })
    }

    pub fn distance(&self) -> f64 {
        (self.x - self.g).norm()
    }
}

fn regressed_point(
    camera: &CameraModel,
    beta: &DepthRegressorParams,
    rel: f64,
    pixel: &Vector2<f64>,
) -> Result<Vector3<f64>> {
    let depth = eval_regressor(beta, rel)?;
    if !(depth > 0.0) {
        return Err(Error::InvalidGoal(depth));
    }
    camera.backproject(pixel, depth)
}

/// Camera-frame goal point at the regressed depth of `goal_pixel`.
pub fn compute_goal(
    camera: &CameraModel,
    beta: &DepthRegressorParams,
    rel_at_goal: f64,
    goal_pixel: &Vector2<f64>,
) -> Result<Vector3<f64>> {
    regressed_point(camera, beta, rel_at_goal, goal_pixel)
}

/// Camera-frame end-effector estimate from the regressor, not from FK.
pub fn compute_state(
    camera: &CameraModel,
    beta: &DepthRegressorParams,
    rel_at_ee: f64,
    ee_pixel: &Vector2<f64>,
) -> Result<Vector3<f64>> {
    regressed_point(camera, beta, rel_at_ee, ee_pixel)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqrSolution {
    pub p: Matrix3<f64>,
    pub gain: Matrix3<f64>,
    pub sweeps: usize,
    pub residual: f64,
}

/// DARE for `A = B = I` by fixed-point iteration from `P0 = Q`.
pub fn solve_dare(q: &Matrix3<f64>, r: &Matrix3<f64>) -> Result<LqrSolution> {
    check_symmetric(q, "Q")?;
    check_symmetric(r, "R")?;
    if r.cholesky().is_none() {
        return Err(Error::Domain("R must be positive definite".into()));
    }
    if q.symmetric_eigenvalues().min() < -1e-12 * q.amax().max(1.0) {
        return Err(Error::Domain("Q must be positive semidefinite".into()));
    }
    let riccati = |p: &Matrix3<f64>| -> Result<Matrix3<f64>> {
        let s = (r + p).cholesky().ok_or(Error::Conditioning)?;
        let next = q + p - p * s.solve(p);
        Ok((next + next.transpose()) * 0.5)
    };
    let mut p = *q;
    for sweep in 1..=RICCATI_MAX_SWEEPS {
        let next = riccati(&p)?;
        let change = (next - p).amax();
        p = next;
        if !p.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericalOverflow);
        }
        if change <= RICCATI_TOLERANCE * p.amax().max(1.0) {
            let gain = (r + p).cholesky().ok_or(Error::Conditioning)?.solve(&p);
            let residual = (p - riccati(&p)?).amax();
            return Ok(LqrSolution { p, gain, sweeps: sweep, residual });
        }
    }
    Err(Error::RiccatiConvergence(RICCATI_MAX_SWEEPS))
}

/// Infinite-horizon LQR gain `K = (R + P)^-1 P`; the control law is `u = -K (x - g)`.
pub fn solve_lqr(q: &Matrix3<f64>, r: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    solve_dare(q, r).map(|s| s.gain)
}

/// Largest eigenvalue modulus of `I - K`.
pub fn closed_loop_spectral_radius(gain: &Matrix3<f64>) -> f64 {
    (Matrix3::identity() - gain).complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// One receding-horizon step. `rel_at_goal` and `rel_at_ee` are the relative
/// depths read at the goal pixel and the tracked end-effector pixel; `None`
/// means no reading. On an unusable goal or state the action is zero and the
/// status says why, while `x` and `g` keep their last valid values.
pub fn control_step(
    ctrl: &mut ControlState,
    cfg: &ControlConfig,
    camera: &CameraModel,
    beta: &DepthRegressorParams,
    rel_at_goal: Option<f64>,
    rel_at_ee: Option<f64>,
    ee_pixel: &Vector2<f64>,
) -> Vector3<f64> {
    let goal = rel_at_goal.ok_or(Error::NoObservation).and_then(|r| compute_goal(camera, beta, r, &cfg.goal_pixel));
    let state = rel_at_ee.ok_or(Error::NoObservation).and_then(|r| compute_state(camera, beta, r, ee_pixel));
    match (goal, state) {
        (Err(_), _) => {
            ctrl.status = ControlStatus::InvalidGoal;
            ctrl.u = Vector3::zeros();
        }
        (_, Err(_)) => {
            ctrl.status = ControlStatus::InvalidState;
            ctrl.u = Vector3::zeros();
        }
        (Ok(g), Ok(x)) => {
            ctrl.g = g;
            ctrl.x = x;
            ctrl.status = ControlStatus::Tracking;
            ctrl.u = lqr_action(&ctrl.gain, &x, &g, cfg.action_limit);
        }
    }
    ctrl.u
}

/// `-K (x - g)` clamped per axis to `limit`.
pub fn lqr_action(gain: &Matrix3<f64>, x: &Vector3<f64>, g: &Vector3<f64>, limit: f64) -> Vector3<f64> {
    (-gain * (x - g)).map(|v| v.clamp(-limit, limit))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlLogRow {
    pub frame: usize,
    pub x: Vector3<f64>,
    pub g: Vector3<f64>,
    pub u: Vector3<f64>,
    pub status: ControlStatus,
}

impl ControlLogRow {
    pub fn from_state(frame: usize, s: &ControlState) -> Self {
        Self { frame, x: s.x, g: s.g, u: s.u, status: s.status }
    }

    pub fn distance(&self) -> f64 {
        (self.x - self.g).norm()
    }
}

pub const CONTROL_LOG_HEADER: [&str; 12] =
    ["frame", "x0", "x1", "x2", "g0", "g1", "g2", "u0", "u1", "u2", "distance", "status"];

pub fn write_control_log<W: Write>(out: W, rows: &[ControlLogRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(CONTROL_LOG_HEADER).map_err(csv_err)?;
    for row in rows {
        let mut rec = vec![row.frame.to_string()];
        for v in row.x.iter().chain(row.g.iter()).chain(row.u.iter()) {
            rec.push(v.to_string());
        }
        rec.push(row.distance().to_string());
        rec.push(row.status.to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_control_log(path: &Path, rows: &[ControlLogRow]) -> Result<()> {
    write_control_log(std::fs::File::create(path)?, rows)
}

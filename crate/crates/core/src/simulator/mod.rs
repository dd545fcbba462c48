//! Synthetic tabletop world with exact depth ground truth.
//!
//! A [`SceneConfig`] fixes the arm, camera, static geometry, relative-depth
//! warp and noise. [`World`] resolves the seed-dependent parts once and yields
//! [`Frame`]s; [`run_trial`] drives an estimator (and optionally the reach
//! controller) through them and scores the result.

mod dmap;
mod geometry;
mod metrics;
mod suite;
mod trial;
mod warp;
mod world;

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::control::ControlConfig;
use crate::error::{Error, Result};
use crate::estimation::EstimatorConfig;
use crate::kinematics::KinematicScene;

pub use dmap::DepthImage;
pub use geometry::{SceneGeometry, SceneObject};
pub use metrics::{evaluate_errors, evaluate_frame, ErrorStatistic, ErrorSummary, FrameEvaluation};
pub use suite::{
    check_ordering, config_hash, load_suite, run_benchmark_suite, run_cells, run_cells_sequential, CellOutcome,
    ErrorTableRow, LoadedSuite, OrderingViolation, RunManifest, SuccessTableRow, SuiteCell, SuiteConfig, SuiteResult,
};
pub use trial::{run_trial, BetaRecord, EndEffectorRecord, TrialReport};
pub use warp::WarpModel;
pub use world::{collect_fit_pairs, Frame, PairMode, World};

/// Joint-angle path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectorySpec {
    /// `center + amplitude * s * sin(2 pi t / period + phase)` per joint. With
    /// `randomize`, phase and the factor `s` in `[0.6, 1]` are drawn from the seed.
    Sinusoidal { center: Vec<f64>, amplitude: Vec<f64>, period_frames: Vec<f64>, randomize: bool },
    /// Piecewise-linear through `points`, holding the last one.
    Waypoints { points: Vec<Vec<f64>>, frames_per_segment: usize },
}

impl TrajectorySpec {
    pub fn joint_count(&self) -> Option<usize> {
        match self {
            TrajectorySpec::Sinusoidal { center, .. } => Some(center.len()),
            TrajectorySpec::Waypoints { points, .. } => points.first().map(Vec::len),
        }
    }

    fn validate(&self, joints: usize) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("trajectory: {m}")));
        match self {
            TrajectorySpec::Sinusoidal { center, amplitude, period_frames, .. } => {
                if center.len() != joints || amplitude.len() != joints || period_frames.len() != joints {
                    return bad("need one center, amplitude and period per joint");
                }
                if period_frames.iter().any(|p| !(*p > 0.0)) {
                    return bad("periods must be positive");
                }
            }
            TrajectorySpec::Waypoints { points, frames_per_segment } => {
                if points.is_empty() || points.iter().any(|p| p.len() != joints) {
                    return bad("need at least one waypoint with one angle per joint");
                }
                if *frames_per_segment == 0 {
                    return bad("frames_per_segment must be positive");
                }
            }
        }
        Ok(())
    }
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        TrajectorySpec::Sinusoidal {
            center: vec![0.0, 0.45, 0.9, 0.6, 0.0],
            amplitude: vec![0.7, 0.3, 0.4, 0.5, 0.6],
            period_frames: vec![90.0, 70.0, 110.0, 60.0, 50.0],
            randomize: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Std of the tracked keypoint pixel, per axis.
    pub tracker_px: f64,
    /// Std added to each kinematic depth observation, meters.
    pub depth_m: f64,
    /// Std of a smooth per-frame error field added to the relative depth map.
    pub relative: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { tracker_px: 1.0, depth_m: 0.005, relative: 0.02 }
    }
}

/// Rectangle of pixels sampled on a grid; the task-space region for the scene error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelMask {
    pub u_min: u32,
    pub u_max: u32,
    pub v_min: u32,
    pub v_max: u32,
    pub stride: u32,
}

impl Default for PixelMask {
    fn default() -> Self {
        Self { u_min: 100, u_max: 540, v_min: 280, v_max: 470, stride: 16 }
    }
}

impl PixelMask {
    pub fn pixels(&self, width: u32, height: u32) -> Vec<nalgebra::Vector2<f64>> {
        if self.stride == 0 {
            return Vec::new();
        }
        let (u_max, v_max) = (self.u_max.min(width.saturating_sub(1)), self.v_max.min(height.saturating_sub(1)));
        let mut out = Vec::new();
        let mut v = self.v_min;
        while v <= v_max {
            let mut u = self.u_min;
            while u <= u_max {
                out.push(nalgebra::Vector2::new(u as f64, v as f64));
                u += self.stride;
            }
            v += self.stride;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub name: String,
    pub robot: KinematicScene,
    pub geometry: SceneGeometry,
    pub warp: WarpModel,
    /// Per-frame random-walk std on every warp parameter.
    pub drift_std: f64,
    pub noise: NoiseConfig,
    pub trajectory: TrajectorySpec,
    pub frames: usize,
    pub seed: u64,
    /// Keypoints are rendered as fronto-parallel disks of this pixel radius.
    pub keypoint_radius_px: f64,
    pub mask: PixelMask,
    pub control: ControlConfig,
    pub estimator: EstimatorConfig,
    pub statistic: ErrorStatistic,
    /// Directory of per-frame metric depth maps scored by `external_baseline`.
    pub external_baseline_dir: Option<PathBuf>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            name: "default".into(),
            robot: KinematicScene::default_arm(),
            geometry: SceneGeometry::default(),
            warp: WarpModel::InverseQuadratic { beta: [0.5, 1.2, 0.1] },
            drift_std: 0.002,
            noise: NoiseConfig::default(),
            trajectory: TrajectorySpec::default(),
            frames: 200,
            seed: 0,
            keypoint_radius_px: 6.0,
            mask: PixelMask::default(),
            control: ControlConfig::default(),
            estimator: EstimatorConfig::default(),
            statistic: ErrorStatistic::Mean,
            external_baseline_dir: None,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        self.robot.chain.validate()?;
        self.robot.camera.build()?;
        self.geometry.validate()?;
        self.trajectory.validate(self.robot.chain.joint_count())?;
        self.control.validate()?;
        self.estimator.training.validate()?;
        if self.robot.chain.keypoint_count() == 0 {
            return Err(Error::Config("scene needs at least one keypoint".into()));
        }
        if self.frames == 0 {
            return Err(Error::Config("frames must be at least 1".into()));
        }
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        let n = &self.noise;
        if !(nonneg(self.drift_std) && nonneg(n.tracker_px) && nonneg(n.depth_m) && nonneg(n.relative)) {
            return Err(Error::Config("noise and drift stds must be non-negative".into()));
        }
        if !(self.keypoint_radius_px > 0.0) {
            return Err(Error::Config("keypoint_radius_px must be positive".into()));
        }
        let k = &self.robot.camera.intrinsics;
        if self.mask.pixels(k.width, k.height).is_empty() {
            return Err(Error::Config("task mask selects no pixels".into()));
        }
        Ok(())
    }

    /// Same scene with every noise and drift source switched off.
    pub fn noiseless(mut self) -> Self {
        self.drift_std = 0.0;
        self.noise = NoiseConfig { tracker_px: 0.0, depth_m: 0.0, relative: 0.0 };
        self
    }

    pub fn load(path: &Path) -> Result<Self> {
        load_config(path)
    }
}

/// Reads a JSON or TOML file, chosen by extension.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display()))),
        Some("toml") => toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display()))),
        _ => Err(Error::Config(format!("{}: expected a .json or .toml file", path.display()))),
    }
}

#[cfg(test)]
mod tests;

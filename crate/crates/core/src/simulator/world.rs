use std::f64::consts::TAU;

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{DepthImage, SceneConfig, TrajectorySpec, WarpModel};
use crate::error::{Error, Result};
use crate::kinematics::{observe_points, CameraModel, KeypointObservationSet, NEAR_PLANE};
use crate::regressor::DepthPairSet;

const STREAM_TRAJECTORY: u64 = 0;
const STREAM_DRIFT: u64 = 1;
const STREAM_FRAMES: u64 = 2;
const FIELD_COMPONENTS: usize = 6;

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normal(std: f64) -> Result<Normal<f64>> {
    Normal::new(0.0, std).map_err(|e| Error::Config(format!("noise std {std}: {e}")))
}

/// A scene with its seed-dependent parts resolved: trajectory phases, the
/// warp drift path and the static depth range.
#[derive(Debug, Clone)]
pub struct World {
    scene: SceneConfig,
    camera: CameraModel,
    camera_center: Vector3<f64>,
    base_from_camera: Matrix3<f64>,
    phases: Vec<(f64, f64)>,
    warp_path: Vec<WarpModel>,
    static_range: (f64, f64),
    mask: Vec<Vector2<f64>>,
}

impl World {
    pub fn new(scene: &SceneConfig) -> Result<Self> {
        scene.validate()?;
        let camera = scene.robot.camera.build()?;
        let base_from_camera = camera.extrinsics.rotation.transpose();
        let camera_center = -(base_from_camera * camera.extrinsics.translation);

        let joints = scene.robot.chain.joint_count();
        let mut rng = rng_stream(scene.seed, STREAM_TRAJECTORY);
        let phases = match &scene.trajectory {
            TrajectorySpec::Sinusoidal { randomize: true, .. } => {
                (0..joints).map(|_| (rng.random_range(0.0..TAU), rng.random_range(0.6..1.0))).collect()
            }
            _ => vec![(0.0, 1.0); joints],
        };

        let mut rng = rng_stream(scene.seed, STREAM_DRIFT);
        let step = normal(scene.drift_std)?;
        let mut params = scene.warp.params();
        let mut warp_path = Vec::with_capacity(scene.frames);
        for t in 0..scene.frames {
            if t > 0 {
                for p in params.iter_mut() {
                    *p += step.sample(&mut rng);
                }
            }
            warp_path.push(scene.warp.with_params(&params));
        }

        let k = scene.robot.camera.intrinsics;
        let mut world = Self {
            scene: scene.clone(),
            camera,
            camera_center,
            base_from_camera,
            phases,
            warp_path,
            static_range: (0.0, 0.0),
            mask: scene.mask.pixels(k.width, k.height),
        };
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for v in (0..k.height).step_by(8) {
            for u in (0..k.width).step_by(8) {
                let z = world.background_depth(&Vector2::new(u as f64, v as f64));
                lo = lo.min(z);
                hi = hi.max(z);
            }
        }
        world.static_range = (lo, hi);
        for (t, w) in world.warp_path.iter().enumerate() {
            w.check_monotone(lo, hi).map_err(|e| Error::Config(format!("frame {t}: {e}")))?;
        }
        Ok(world)
    }

    pub fn scene(&self) -> &SceneConfig {
        &self.scene
    }

    pub fn camera(&self) -> &CameraModel {
        &self.camera
    }

    pub fn mask_pixels(&self) -> &[Vector2<f64>] {
        &self.mask
    }

    /// Min and max background depth over a coarse pixel grid.
    pub fn static_depth_range(&self) -> (f64, f64) {
        self.static_range
    }

    pub fn warp_at(&self, t: usize) -> WarpModel {
        self.warp_path[t.min(self.warp_path.len() - 1)]
    }

    pub fn joint_angles(&self, t: usize) -> Vec<f64> {
        match &self.scene.trajectory {
            TrajectorySpec::Sinusoidal { center, amplitude, period_frames, .. } => (0..center.len())
                .map(|j| {
                    let (phase, s) = self.phases[j];
                    center[j] + amplitude[j] * s * (TAU * t as f64 / period_frames[j] + phase).sin()
                })
                .collect(),
            TrajectorySpec::Waypoints { points, frames_per_segment } => {
                let seg = t / frames_per_segment;
                if seg + 1 >= points.len() {
                    return points[points.len() - 1].clone();
                }
                let a = (t % frames_per_segment) as f64 / *frames_per_segment as f64;
                points[seg].iter().zip(&points[seg + 1]).map(|(p, q)| p + a * (q - p)).collect()
            }
        }
    }

    /// Depth of the static scene (no robot) along the ray through `pixel`.
    pub fn background_depth(&self, pixel: &Vector2<f64>) -> f64 {
        let dir = self.base_from_camera * self.camera.ray(pixel);
        self.scene.geometry.cast(&self.camera_center, &dir, NEAR_PLANE)
    }

    pub fn frame(&self, t: usize) -> Result<Frame<'_>> {
        self.frame_with_end_effector(t, None)
    }

    /// Frame `t`, optionally with the last keypoint replaced by a camera-frame
    /// point (the controlled end effector).
    pub fn frame_with_end_effector(&self, t: usize, end_effector: Option<Vector3<f64>>) -> Result<Frame<'_>> {
        if t >= self.scene.frames {
            return Err(Error::Domain(format!("frame {t} outside 0..{}", self.scene.frames)));
        }
        let thetas = self.joint_angles(t);
        let base_points = self.scene.robot.chain.keypoint_positions(&thetas)?;
        let mut points: Vec<Vector3<f64>> = base_points.iter().map(|p| self.camera.to_camera(p)).collect();
        if let (Some(ee), Some(last)) = (end_effector, points.last_mut()) {
            *last = ee;
        }
        let truth = observe_points(&points, &self.camera);

        let warp = self.warp_at(t);
        let mut hi = self.static_range.1;
        let mut lo = self.static_range.0;
        for i in truth.visible_indices() {
            lo = lo.min(truth.depths[i]);
            hi = hi.max(truth.depths[i]);
        }
        warp.check_monotone(lo, hi).map_err(|e| Error::Config(format!("frame {t}: {e}")))?;

        let mut rng = rng_stream(self.scene.seed, STREAM_FRAMES + t as u64);
        let px = normal(self.scene.noise.tracker_px)?;
        let dz = normal(self.scene.noise.depth_m)?;
        let mut pixels = truth.pixels.clone();
        let mut depths = truth.depths.clone();
        for i in 0..points.len() {
            // Draw for every keypoint so the stream does not depend on visibility.
            let noise = Vector2::new(px.sample(&mut rng), px.sample(&mut rng));
            let dn = dz.sample(&mut rng);
            if truth.visible[i] {
                pixels[i] += noise;
                depths[i] += dn;
            }
        }
        let observations = KeypointObservationSet::new(pixels, depths, truth.visible.clone())?;

        // Plane waves with random direction, wavelength and phase; unit variance.
        let field = (0..FIELD_COMPONENTS)
            .map(|_| {
                let angle = rng.random_range(0.0..TAU);
                let wavelength = rng.random_range(80.0..320.0);
                let phase = rng.random_range(0.0..TAU);
                let k = TAU / wavelength;
                (k * angle.cos(), k * angle.sin(), phase)
            })
            .collect();
        Ok(Frame { world: self, t, thetas, warp, keypoints_camera: points, truth, observations, field })
    }
}

/// One simulated time step.
#[derive(Debug, Clone)]
pub struct Frame<'a> {
    world: &'a World,
    pub t: usize,
    pub thetas: Vec<f64>,
    pub warp: WarpModel,
    pub keypoints_camera: Vec<Vector3<f64>>,
    /// Exact pixels and depths of the keypoints.
    pub truth: KeypointObservationSet,
    /// What the estimator sees: tracked pixels and kinematic depths with noise.
    pub observations: KeypointObservationSet,
    field: Vec<(f64, f64, f64)>,
}

impl Frame<'_> {
    pub fn world(&self) -> &World {
        self.world
    }

    /// Ground-truth metric depth at a pixel. Keypoints are drawn over the
    /// static scene as disks; where disks overlap the nearest centre wins.
    pub fn depth_gt(&self, pixel: &Vector2<f64>) -> f64 {
        let r2 = self.world.scene.keypoint_radius_px.powi(2);
        let mut best: Option<(f64, f64)> = None;
        for i in self.truth.visible_indices() {
            let d2 = (self.truth.pixels[i] - pixel).norm_squared();
            if d2 <= r2 && best.is_none_or(|(b, _)| d2 < b) {
                best = Some((d2, self.truth.depths[i]));
            }
        }
        match best {
            Some((_, z)) => z,
            None => self.world.background_depth(pixel),
        }
    }

    /// Relative-depth error at a pixel; zero when `noise.relative` is zero.
    pub fn relative_noise(&self, pixel: &Vector2<f64>) -> f64 {
        let std = self.world.scene.noise.relative;
        if std == 0.0 {
            return 0.0;
        }
        let sum: f64 = self.field.iter().map(|(kx, ky, ph)| (kx * pixel.x + ky * pixel.y + ph).sin()).sum();
        std * (2.0 / FIELD_COMPONENTS as f64).sqrt() * sum
    }

    /// Relative depth `warp(Z_gt)` at a pixel, plus the relative-depth error field.
    pub fn relative_at(&self, pixel: &Vector2<f64>) -> f64 {
        self.warp.apply(self.depth_gt(pixel)) + self.relative_noise(pixel)
    }

    /// Relative depth of the static scene, ignoring the robot.
    pub fn background_relative_at(&self, pixel: &Vector2<f64>) -> f64 {
        self.warp.apply(self.world.background_depth(pixel)) + self.relative_noise(pixel)
    }

    /// Relative depth at each tracked keypoint; zero where not visible.
    pub fn tracked_relative(&self) -> Vec<f64> {
        (0..self.observations.len())
            .map(|i| if self.observations.visible[i] { self.relative_at(&self.observations.pixels[i]) } else { 0.0 })
            .collect()
    }

    /// Full-resolution ground-truth depth image.
    pub fn render_depth(&self) -> DepthImage {
        let k = self.world.camera.intrinsics;
        DepthImage::from_fn(k.width, k.height, |u, v| self.depth_gt(&Vector2::new(u as f64, v as f64)))
    }

    /// Full-resolution relative depth image.
    pub fn render_relative(&self) -> DepthImage {
        let k = self.world.camera.intrinsics;
        DepthImage::from_fn(k.width, k.height, |u, v| self.relative_at(&Vector2::new(u as f64, v as f64)))
    }
}

/// Which frames contribute to a fit-pair set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairMode {
    /// Mask pixels of one frame.
    Frame(usize),
    /// Mask pixels of every frame.
    Pooled,
}

/// `(relative, metric)` pairs over the task mask, metric side perturbed by the
/// scene's observation depth noise.
pub fn collect_fit_pairs(scene: &SceneConfig, mode: PairMode) -> Result<DepthPairSet> {
    let world = World::new(scene)?;
    let frames: Vec<usize> = match mode {
        PairMode::Frame(t) => vec![t],
        PairMode::Pooled => (0..scene.frames).collect(),
    };
    let dz = normal(scene.noise.depth_m)?;
    let mut rng = rng_stream(scene.seed, u64::MAX);
    let mut pairs = Vec::new();
    for t in frames {
        let frame = world.frame(t)?;
        for p in world.mask_pixels() {
            let z = frame.depth_gt(p);
            pairs.push((frame.relative_at(p), (z + dz.sample(&mut rng)).max(1e-6)));
        }
    }
    DepthPairSet::new(pairs)
}

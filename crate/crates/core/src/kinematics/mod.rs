//! Serial-arm forward kinematics, pinhole camera, and kinematic depth observations.

mod camera;
mod chain;
mod config;
mod transform;

pub use camera::{CameraModel, Intrinsics, NEAR_PLANE};
pub use chain::{KeypointAttachment, KinematicChain, RevoluteJoint};
pub use config::{CameraConfig, KinematicScene};
pub use transform::RigidTransform;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Keypoint pixels, their kinematic metric depths, and visibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointObservationSet {
    pub pixels: Vec<Vector2<f64>>,
    pub depths: Vec<f64>,
    pub visible: Vec<bool>,
}

impl KeypointObservationSet {
    pub fn new(pixels: Vec<Vector2<f64>>, depths: Vec<f64>, visible: Vec<bool>) -> Result<Self> {
        if pixels.len() != depths.len() || pixels.len() != visible.len() {
            return Err(Error::Arity { expected: pixels.len(), got: depths.len().min(visible.len()) });
        }
        Ok(Self { pixels, depths, visible })
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn visible_count(&self) -> usize {
        self.visible.iter().filter(|v| **v).count()
    }

    pub fn visible_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.visible.iter().enumerate().filter(|(_, v)| **v).map(|(i, _)| i)
    }
}

/// Camera-frame keypoint positions for a joint configuration.
pub fn keypoints_in_camera(chain: &KinematicChain, thetas: &[f64], camera: &CameraModel) -> Result<Vec<Vector3<f64>>> {
    Ok(chain.keypoint_positions(thetas)?.iter().map(|p| camera.to_camera(p)).collect())
}

/// Builds an observation set from camera-frame keypoint positions. Points in
/// front of the near plane that project inside the image are visible.
pub fn observe_points(points: &[Vector3<f64>], camera: &CameraModel) -> KeypointObservationSet {
    let mut pixels = Vec::with_capacity(points.len());
    let mut depths = Vec::with_capacity(points.len());
    let mut visible = Vec::with_capacity(points.len());
    for p in points {
        depths.push(p.z);
        if p.z <= NEAR_PLANE {
            pixels.push(Vector2::new(f64::NAN, f64::NAN));
            visible.push(false);
            continue;
        }
        // z > 0 here, so projection cannot fail
        let px = camera.project(p).expect("point in front of camera");
        visible.push(camera.in_bounds(&px));
        pixels.push(px);
    }
    KeypointObservationSet { pixels, depths, visible }
}

/// Kinematic reference observations: each keypoint's camera-frame depth and pixel.
pub fn observed_keypoint_depths(
    chain: &KinematicChain,
    thetas: &[f64],
    camera: &CameraModel,
) -> Result<KeypointObservationSet> {
    let pts = keypoints_in_camera(chain, thetas, camera)?;
    Ok(observe_points(&pts, camera))
}

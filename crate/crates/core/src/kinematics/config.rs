use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{CameraModel, Intrinsics, KeypointAttachment, KinematicChain, RevoluteJoint, RigidTransform};
use crate::error::Result;

/// Declarative camera description; rotation is a `[w, x, y, z]` quaternion of
/// the camera-from-base transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig {
    pub intrinsics: Intrinsics,
    pub rotation: [f64; 4],
    pub translation: [f64; 3],
}

impl CameraConfig {
    pub fn build(&self) -> Result<CameraModel> {
        let ext = RigidTransform::from_quaternion(self.rotation, Vector3::from(self.translation));
        CameraModel::new(self.intrinsics, ext)
    }

    pub fn from_model(cam: &CameraModel) -> Self {
        Self {
            intrinsics: cam.intrinsics,
            rotation: cam.extrinsics.quaternion_wxyz(),
            translation: cam.extrinsics.translation.into(),
        }
    }
}

/// Arm plus camera: everything needed to compute kinematic observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicScene {
    pub chain: KinematicChain,
    pub camera: CameraConfig,
}

impl KinematicScene {
    /// A five-joint arm on a table viewed from the front, with five keypoints
    /// spread over the distal half of the chain; the last one is the tool tip.
    pub fn default_arm() -> Self {
        let chain = KinematicChain {
            joints: vec![
                RevoluteJoint::new([0.0, 0.0, 1.0], [0.0, 0.0, 0.0]),
                RevoluteJoint::new([0.0, 1.0, 0.0], [0.0, 0.0, 0.33]),
                RevoluteJoint::new([0.0, 1.0, 0.0], [0.0, 0.0, 0.40]),
                RevoluteJoint::new([0.0, 1.0, 0.0], [0.0, 0.0, 0.38]),
                RevoluteJoint::new([0.0, 0.0, 1.0], [0.0, 0.0, 0.08]),
            ],
            keypoints: vec![
                KeypointAttachment { link: 3, offset: [0.0, 0.0, 0.0] },
                KeypointAttachment { link: 3, offset: [0.0, 0.0, 0.19] },
                KeypointAttachment { link: 4, offset: [0.0, 0.0, 0.0] },
                KeypointAttachment { link: 5, offset: [0.0, 0.0, 0.06] },
                KeypointAttachment { link: 5, offset: [0.0, 0.0, 0.16] },
            ],
        };
        let ext = RigidTransform::look_at(&Vector3::new(1.9, 0.0, 1.05), &Vector3::new(0.2, 0.0, 0.4), &Vector3::z());
        let camera = CameraModel { intrinsics: Intrinsics::default(), extrinsics: ext };
        Self { chain, camera: CameraConfig::from_model(&camera) }
    }

    pub fn camera_model(&self) -> Result<CameraModel> {
        self.camera.build()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_arm_is_valid_and_serializable() {
        let scene = KinematicScene::default_arm();
        scene.chain.validate().unwrap();
        let cam = scene.camera_model().unwrap();
        let json = serde_json::to_string(&scene).unwrap();
        let back: KinematicScene = serde_json::from_str(&json).unwrap();
        assert_eq!(back, scene);
        let cam2 = back.camera_model().unwrap();
        assert!((cam.extrinsics.rotation - cam2.extrinsics.rotation).amax() < 1e-12);
    }
}

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::RigidTransform;
use crate::error::{Error, Result};

/// A revolute joint: a fixed offset from the parent link, then a rotation
/// about `axis` by the joint angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevoluteJoint {
    pub axis: [f64; 3],
    pub offset: [f64; 3],
}

impl RevoluteJoint {
    pub fn new(axis: [f64; 3], offset: [f64; 3]) -> Self {
        Self { axis, offset }
    }

    /// Parent-from-child transform at joint angle `theta`.
    pub fn transform(&self, theta: f64) -> RigidTransform {
        let offset = RigidTransform::from_translation(Vector3::from(self.offset));
        offset.compose(&RigidTransform::from_axis_angle(&Vector3::from(self.axis), theta))
    }
}

/// A tracked point rigidly attached to a link (1-based link index).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointAttachment {
    pub link: usize,
    pub offset: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicChain {
    pub joints: Vec<RevoluteJoint>,
    pub keypoints: Vec<KeypointAttachment>,
}

impl KinematicChain {
    pub fn new(joints: Vec<RevoluteJoint>, keypoints: Vec<KeypointAttachment>) -> Result<Self> {
        let chain = Self { joints, keypoints };
        chain.validate()?;
        Ok(chain)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.joints.len();
        if n == 0 {
            return Err(Error::Config("kinematic chain has no joints".into()));
        }
        for (i, j) in self.joints.iter().enumerate() {
            let axis = Vector3::from(j.axis);
            if !(axis.norm() > 1e-12 && axis.iter().all(|v| v.is_finite())) {
                return Err(Error::Config(format!("joint {}: degenerate axis", i + 1)));
            }
            if !j.offset.iter().all(|v| v.is_finite()) {
                return Err(Error::Config(format!("joint {}: offset not finite", i + 1)));
            }
        }
        for (i, k) in self.keypoints.iter().enumerate() {
            if k.link == 0 || k.link > n {
                return Err(Error::Config(format!("keypoint {}: link index {} outside [1, {n}]", i + 1, k.link)));
            }
            if !k.offset.iter().all(|v| v.is_finite()) {
                return Err(Error::Config(format!("keypoint {}: offset not finite", i + 1)));
            }
        }
        Ok(())
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    pub fn keypoint_count(&self) -> usize {
        self.keypoints.len()
    }

    /// Base-frame pose of every link; entry 0 is the base itself.
    pub fn forward_kinematics(&self, thetas: &[f64]) -> Result<Vec<RigidTransform>> {
        if thetas.len() != self.joints.len() {
            return Err(Error::Arity { expected: self.joints.len(), got: thetas.len() });
        }
        if let Some(t) = thetas.iter().find(|t| !t.is_finite()) {
            return Err(Error::Domain(format!("joint angle {t} is not finite")));
        }
        let mut poses = Vec::with_capacity(thetas.len() + 1);
        let mut acc = RigidTransform::identity();
        poses.push(acc);
        for (joint, &theta) in self.joints.iter().zip(thetas) {
            acc = acc.compose(&joint.transform(theta));
            poses.push(acc);
        }
        Ok(poses)
    }

    /// Base-frame positions of all keypoints.
    pub fn keypoint_positions(&self, thetas: &[f64]) -> Result<Vec<Vector3<f64>>> {
        let poses = self.forward_kinematics(thetas)?;
        Ok(self.keypoints.iter().map(|k| poses[k.link].transform_point(&Vector3::from(k.offset))).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn zero_angles_accumulate_offsets() {
        let chain = KinematicChain::new(
            vec![
                RevoluteJoint::new([0.0, 0.0, 1.0], [0.1, 0.0, 0.0]),
                RevoluteJoint::new([0.0, 1.0, 0.0], [0.0, 0.2, 0.0]),
                RevoluteJoint::new([1.0, 0.0, 0.0], [0.0, 0.0, 0.3]),
            ],
            vec![],
        )
        .unwrap();
        let poses = chain.forward_kinematics(&[0.0; 3]).unwrap();
        assert_eq!(poses.len(), 4);
        assert_eq!(poses[0], RigidTransform::identity());
        let expect = [[0.1, 0.0, 0.0], [0.1, 0.2, 0.0], [0.1, 0.2, 0.3]];
        for (p, e) in poses[1..].iter().zip(expect) {
            assert!((p.translation - Vector3::from(e)).amax() < 1e-15);
        }
    }

    #[test]
    fn planar_link_rotates_tip() {
        let l = 0.7;
        let chain = KinematicChain::new(
            vec![RevoluteJoint::new([0.0, 0.0, 1.0], [0.0; 3])],
            vec![KeypointAttachment { link: 1, offset: [l, 0.0, 0.0] }],
        )
        .unwrap();
        let p0 = chain.keypoint_positions(&[0.0]).unwrap()[0];
        assert!((p0 - Vector3::new(l, 0.0, 0.0)).amax() < 1e-15);
        let p = chain.keypoint_positions(&[FRAC_PI_2]).unwrap()[0];
        assert!((p - Vector3::new(0.0, l, 0.0)).amax() < 1e-12);
    }

    #[test]
    fn inverse_walk_returns_identity() {
        let chain = KinematicChain::new(
            vec![
                RevoluteJoint::new([0.0, 0.0, 1.0], [0.0, 0.0, 0.3]),
                RevoluteJoint::new([0.0, 1.0, 0.0], [0.0, 0.0, 0.4]),
                RevoluteJoint::new([0.3, 1.0, 0.2], [0.1, 0.0, 0.4]),
            ],
            vec![],
        )
        .unwrap();
        let thetas = [0.3, -1.1, 2.0];
        let poses = chain.forward_kinematics(&thetas).unwrap();
        let mut acc = poses[3];
        for (j, &t) in chain.joints.iter().zip(&thetas).rev() {
            acc = acc.compose(&j.transform(t).inverse());
        }
        assert!(acc.orthonormality_error() < 1e-9);
        assert!((acc.rotation - nalgebra::Matrix3::identity()).amax() < 1e-9);
        assert!(acc.translation.amax() < 1e-9);
    }

    #[test]
    fn arity_and_link_checks() {
        let chain = KinematicChain::new(vec![RevoluteJoint::new([0.0, 0.0, 1.0], [0.0; 3])], vec![]).unwrap();
        assert!(matches!(chain.forward_kinematics(&[0.0, 1.0]), Err(Error::Arity { expected: 1, got: 2 })));
        assert!(KinematicChain::new(
            vec![RevoluteJoint::new([0.0, 0.0, 1.0], [0.0; 3])],
            vec![KeypointAttachment { link: 2, offset: [0.0; 3] }],
        )
        .is_err());
        assert!(KinematicChain::new(vec![], vec![]).is_err());
    }
}

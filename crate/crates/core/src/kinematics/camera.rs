use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::RigidTransform;
use crate::error::{Error, Result};

/// Points closer than this (camera-frame z, meters) are culled.
pub const NEAR_PLANE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }
}

impl Default for Intrinsics {
    fn default() -> Self {
        Self { fx: 525.0, fy: 525.0, cx: 320.0, cy: 240.0, width: 640, height: 480 }
    }
}

/// Pinhole camera with zero skew. `extrinsics` maps base-frame points into
/// the camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub intrinsics: Intrinsics,
    pub extrinsics: RigidTransform,
}

impl CameraModel {
    pub fn new(intrinsics: Intrinsics, extrinsics: RigidTransform) -> Result<Self> {
        let cam = Self { intrinsics, extrinsics };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        let k = &self.intrinsics;
        if !(k.fx > 0.0 && k.fy > 0.0 && k.fx.is_finite() && k.fy.is_finite()) {
            return Err(Error::Config("focal lengths must be positive".into()));
        }
        if !(k.cx.is_finite() && k.cy.is_finite()) {
            return Err(Error::Config("principal point must be finite".into()));
        }
        if k.width == 0 || k.height == 0 {
            return Err(Error::Config("image size must be non-zero".into()));
        }
        if !self.extrinsics.is_rigid(1e-9) {
            return Err(Error::Config("extrinsic rotation is not orthonormal".into()));
        }
        Ok(())
    }

    /// Pixel of a camera-frame point.
    pub fn project(&self, p: &Vector3<f64>) -> Result<Vector2<f64>> {
        if !(p.z > 0.0) {
            return Err(Error::BehindCamera(p.z));
        }
        let k = &self.intrinsics;
        Ok(Vector2::new(k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy))
    }

    /// Camera-frame point at `depth` along the ray through `pixel`: `depth * K^-1 [u, v, 1]`.
    pub fn backproject(&self, pixel: &Vector2<f64>, depth: f64) -> Result<Vector3<f64>> {
        if !(depth > 0.0 && depth.is_finite()) {
            return Err(Error::Domain(format!("depth {depth} must be positive")));
        }
        Ok(self.ray(pixel) * depth)
    }

    /// `K^-1 [u, v, 1]`, the ray with unit z.
    pub fn ray(&self, pixel: &Vector2<f64>) -> Vector3<f64> {
        let k = &self.intrinsics;
        Vector3::new((pixel.x - k.cx) / k.fx, (pixel.y - k.cy) / k.fy, 1.0)
    }

    pub fn in_bounds(&self, pixel: &Vector2<f64>) -> bool {
        let k = &self.intrinsics;
        pixel.x >= 0.0 && pixel.y >= 0.0 && pixel.x < k.width as f64 && pixel.y < k.height as f64
    }

    pub fn to_camera(&self, base_point: &Vector3<f64>) -> Vector3<f64> {
        self.extrinsics.transform_point(base_point)
    }
}

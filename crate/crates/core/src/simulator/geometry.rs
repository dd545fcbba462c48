use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Primitive resting in the base frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum SceneObject {
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    /// Axis-aligned box given by opposite corners.
    Cuboid {
        min: [f64; 3],
        max: [f64; 3],
    },
}

/// Coarse tabletop world: a horizontal table plane, a back wall normal to the
/// base x axis and a few primitives. Depth comes from ray casting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneGeometry {
    pub table_height: f64,
    /// Wall plane `x = wall_x`, behind the robot as seen from the camera.
    pub wall_x: f64,
    /// Depth returned when a ray hits nothing.
    pub far_depth: f64,
    pub objects: Vec<SceneObject>,
}

impl Default for SceneGeometry {
    fn default() -> Self {
        Self {
            table_height: 0.0,
            wall_x: -0.8,
            far_depth: 6.0,
            objects: vec![
                SceneObject::Cuboid { min: [0.45, 0.12, 0.0], max: [0.6, 0.27, 0.14] },
                SceneObject::Sphere { center: [0.5, -0.3, 0.09], radius: 0.09 },
                SceneObject::Cuboid { min: [0.05, 0.3, 0.0], max: [0.3, 0.5, 0.06] },
                SceneObject::Sphere { center: [-0.2, -0.35, 0.15], radius: 0.15 },
            ],
        }
    }
}

impl SceneGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.far_depth > 0.0 && self.far_depth.is_finite()) {
            return Err(Error::Config("far_depth must be positive".into()));
        }
        for o in &self.objects {
            match *o {
                SceneObject::Sphere { radius, .. } if !(radius > 0.0) => {
                    return Err(Error::Config("sphere radius must be positive".into()))
                }
                SceneObject::Cuboid { min, max } if (0..3).any(|i| !(max[i] > min[i])) => {
                    return Err(Error::Config("cuboid max must exceed min".into()))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Smallest `s > near` with `origin + s * dir` on a surface, or `far_depth`.
    pub fn cast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, near: f64) -> f64 {
        let mut best = f64::INFINITY;
        let mut take = |s: f64| {
            if s > near && s < best {
                best = s;
            }
        };
        if dir.z < 0.0 {
            take((self.table_height - origin.z) / dir.z);
        }
        if dir.x < 0.0 {
            take((self.wall_x - origin.x) / dir.x);
        }
        for o in &self.objects {
            match *o {
                SceneObject::Sphere { center, radius } => {
                    if let Some(s) = hit_sphere(origin, dir, &Vector3::from(center), radius, near) {
                        take(s);
                    }
                }
                SceneObject::Cuboid { min, max } => {
                    if let Some(s) = hit_cuboid(origin, dir, &min, &max, near) {
                        take(s);
                    }
                }
            }
        }
        if best.is_finite() {
            best
        } else {
            self.far_depth
        }
    }
}

fn hit_sphere(o: &Vector3<f64>, d: &Vector3<f64>, c: &Vector3<f64>, radius: f64, near: f64) -> Option<f64> {
    let oc = o - c;
    let a = d.norm_squared();
    let half_b = oc.dot(d);
    let cc = oc.norm_squared() - radius * radius;
    let disc = half_b * half_b - a * cc;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    [(-half_b - sq) / a, (-half_b + sq) / a].into_iter().find(|&s| s > near)
}

fn hit_cuboid(o: &Vector3<f64>, d: &Vector3<f64>, min: &[f64; 3], max: &[f64; 3], near: f64) -> Option<f64> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for i in 0..3 {
        if d[i] == 0.0 {
            if o[i] < min[i] || o[i] > max[i] {
                return None;
            }
            continue;
        }
        let (a, b) = ((min[i] - o[i]) / d[i], (max[i] - o[i]) / d[i]);
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
    }
    if t0 > t1 {
        return None;
    }
    [t0, t1].into_iter().find(|&s| s > near)
}

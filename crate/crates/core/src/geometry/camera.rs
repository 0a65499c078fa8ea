use nalgebra::{Matrix3, Matrix3x4, RowVector4, Vector4};
use serde::{Deserialize, Serialize};

use super::{Pose, Vec2, Vec3};
use crate::error::{Error, Result};

/// Ideal pinhole intrinsics. Pixel `(col, row)` has its center at `(col, row)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let intr = Self { fx, fy, cx, cy, width, height };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0) {
            return Err(Error::Domain { name: "fx", value: self.fx });
        }
        if !(self.fy > 0.0) {
            return Err(Error::Domain { name: "fy", value: self.fy });
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return Err(Error::Domain { name: "cx", value: self.cx });
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(Error::Domain { name: "cy", value: self.cy });
        }
        Ok(())
    }

    /// 320x240 camera whose vertical field of view spans 0.218 m at 0.20 m.
    pub fn simulated() -> Self {
        let f = 240.0 * 0.20 / 0.218;
        Self { fx: f, fy: f, cx: 160.0, cy: 120.0, width: 320, height: 240 }
    }

    /// World-space height imaged at `distance` along the optical axis.
    pub fn vertical_fov_length(&self, distance: f64) -> f64 {
        self.height as f64 * distance / self.fy
    }

    pub fn k(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Mean focal length, used where a single `f` is needed.
    pub fn focal(&self) -> f64 {
        0.5 * (self.fx + self.fy)
    }

    /// Projects a camera-frame point. Errors when the depth is not positive.
    pub fn project_camera_point(&self, p: &Vec3) -> Result<Vec2> {
        if !(p.z > 0.0) {
            return Err(Error::BehindCamera { depth: p.z });
        }
        Ok(Vec2::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    /// Pixel and camera-frame depth of a world point.
    pub fn project(&self, pose: &Pose, world: &Vec3) -> Result<(Vec2, f64)> {
        let p = pose.to_camera(world);
        Ok((self.project_camera_point(&p)?, p.z))
    }

    pub fn projection_matrix(&self, pose: &Pose) -> ProjectionMatrix {
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(pose.rotation());
        rt.fixed_view_mut::<3, 1>(0, 3).copy_from(pose.translation());
        ProjectionMatrix(self.k() * rt)
    }

    /// True when the pixel position falls on the sensor.
    pub fn contains(&self, px: &Vec2) -> bool {
        px.x >= -0.5
            && px.y >= -0.5
            && px.x < self.width as f64 - 0.5
            && px.y < self.height as f64 - 0.5
    }

    /// Camera-frame direction (z = 1) through a pixel.
    pub fn unproject(&self, px: &Vec2) -> Vec3 {
        Vec3::new((px.x - self.cx) / self.fx, (px.y - self.cy) / self.fy, 1.0)
    }

    /// World-frame viewing ray through a pixel.
    pub fn ray(&self, pose: &Pose, px: &Vec2) -> Ray {
        let dir = pose.vector_to_world(&self.unproject(px));
        Ray { origin: pose.center(), direction: dir.normalize() }
    }
}

/// `P = K [R | T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionMatrix(pub Matrix3x4<f64>);

impl ProjectionMatrix {
    pub fn row(&self, i: usize) -> RowVector4<f64> {
        self.0.row(i).into_owned()
    }

    /// Homogeneous projection; `None` when the point maps to infinity.
    pub fn project(&self, world: &Vec3) -> Option<Vec2> {
        let h = self.0 * Vector4::new(world.x, world.y, world.z, 1.0);
        (h.z.abs() > 1e-15).then(|| Vec2::new(h.x / h.z, h.y / h.z))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit length.
    pub direction: Vec3,
}

impl Ray {
    /// Ray parameter (distance along the ray, clamped at 0) closest to `p`.
    pub fn closest_param(&self, p: &Vec3) -> f64 {
        (p - self.origin).dot(&self.direction).max(0.0)
    }

    pub fn distance_to_point(&self, p: &Vec3) -> f64 {
        let s = self.closest_param(p);
        (self.origin + self.direction * s - p).norm()
    }

    /// Closest approach between the ray and segment `[a, b]`.
    ///
    /// Returns `(distance, ray parameter, segment parameter in [0, 1])`.
    pub fn closest_to_segment(&self, a: &Vec3, b: &Vec3) -> (f64, f64, f64) {
        let d = self.direction;
        let e = b - a;
        let r = self.origin - a;
        let a11 = d.dot(&d);
        let a22 = e.dot(&e);
        let a12 = d.dot(&e);
        let b1 = d.dot(&r);
        let b2 = e.dot(&r);
        let (s, t) = if a22 <= f64::MIN_POSITIVE {
            ((-b1 / a11).max(0.0), 0.0)
        } else {
            let denom = a11 * a22 - a12 * a12;
            let mut t = if denom > 1e-14 * a11 * a22 {
                ((a11 * b2 - a12 * b1) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut s = (a12 * t - b1) / a11;
            if s < 0.0 {
                s = 0.0;
                t = (b2 / a22).clamp(0.0, 1.0);
            }
            (s, t)
        };
        let gap = self.origin + d * s - (a + e * t);
        (gap.norm(), s, t)
    }
}

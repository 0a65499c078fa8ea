use nalgebra::{Matrix3, Rotation3};
use serde::{Deserialize, Serialize};

use super::Vec3;
use crate::error::{Error, Result};

/// Rigid world-to-camera transform: `x_cam = rotation * x_world + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vec3,
}

const ORTHO_TOL: f64 = 1e-9;

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self> {
        let err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if err > ORTHO_TOL || (rotation.determinant() - 1.0).abs() > ORTHO_TOL {
            return Err(Error::DegenerateGeometry("rotation is not in SO(3)"));
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vec3::zeros() }
    }

    /// Camera placed at `center` (world) with its optical axis along `forward`.
    ///
    /// Image rows run along `-up` projected onto the image plane, so world "up"
    /// appears as `-Y` in the image.
    pub fn looking(center: Vec3, forward: Vec3, up: Vec3) -> Result<Self> {
        let z = forward
            .try_normalize(1e-12)
            .ok_or(Error::DegenerateGeometry("zero forward vector"))?;
        let x = z
            .cross(&up)
            .try_normalize(1e-12)
            .ok_or(Error::DegenerateGeometry("forward parallel to up"))?;
        let y = z.cross(&x);
        // Rows are the camera axes expressed in world coordinates.
        let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        Ok(Self::from_center(rotation, center))
    }

    /// Builds the pose from a world-to-camera rotation and the camera center.
    pub fn from_center(rotation: Matrix3<f64>, center: Vec3) -> Self {
        Self { rotation, translation: -(rotation * center) }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    /// Rotation taking camera-frame vectors to the world frame.
    pub fn cam_to_world(&self) -> Matrix3<f64> {
        self.rotation.transpose()
    }

    pub fn to_camera(&self, world: &Vec3) -> Vec3 {
        self.rotation * world + self.translation
    }

    pub fn to_world(&self, cam: &Vec3) -> Vec3 {
        self.rotation.transpose() * (cam - self.translation)
    }

    pub fn vector_to_world(&self, cam: &Vec3) -> Vec3 {
        self.rotation.transpose() * cam
    }

    pub fn vector_to_camera(&self, world: &Vec3) -> Vec3 {
        self.rotation * world
    }

    /// `self ∘ other`: first apply `other`, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose { rotation: rt, translation: -(rt * self.translation) }
    }

    /// Rotates the whole camera rig about the vertical world axis through `pivot`.
    pub fn orbit_about_z(&self, pivot: &Vec3, angle: f64) -> Pose {
        let rz = Rotation3::from_axis_angle(&Vec3::z_axis(), angle).into_inner();
        let center = pivot + rz * (self.center() - pivot);
        let cam_to_world = rz * self.cam_to_world();
        Pose::from_center(cam_to_world.transpose(), center)
    }

    /// Heading of the optical axis in the world XY plane (radians).
    pub fn yaw(&self) -> f64 {
        let fwd = self.vector_to_world(&Vec3::z());
        fwd.y.atan2(fwd.x)
    }

    pub fn translated(&self, world_delta: &Vec3) -> Pose {
        Pose::from_center(self.rotation, self.center() + world_delta)
    }

    /// Re-orthonormalizes the rotation after repeated integration steps.
    pub fn renormalized(&self) -> Pose {
        let rot = Rotation3::from_matrix(&self.rotation).into_inner();
        Pose::from_center(rot, self.center())
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

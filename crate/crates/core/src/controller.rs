//! Branch-following velocity controller with periodic look-at rotations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose, Vec2, Vec3};
use crate::model3d::TreeModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerParams {
    /// Gain on the horizontal pixel error (1/px).
    pub k_u: f64,
    /// Gain on the depth error (1/m).
    pub k_z: f64,
    /// Standoff distance from the branch (m).
    pub z_target: f64,
    /// Commanded speed (m/s).
    pub speed: f64,
    /// Look-at rotation angle (rad).
    pub lookat_angle: f64,
    /// Viewpoint switches per vertical field-of-view length; 0 disables rotation.
    pub rotation_frequency: f64,
    /// Slew-rate cap for viewpoint changes (rad/s).
    pub max_angular_rate: f64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            k_u: 0.002,
            k_z: 2.0,
            z_target: 0.20,
            speed: 0.02,
            lookat_angle: 0.0,
            rotation_frequency: 0.0,
            max_angular_rate: 0.5,
        }
    }
}

impl ControllerParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::Config(format!("{what} out of range: {v}")));
        if !(self.speed > 0.0) {
            return bad("speed", self.speed);
        }
        if !(self.z_target > 0.0) {
            return bad("z_target", self.z_target);
        }
        if !(self.rotation_frequency >= 0.0) {
            return bad("rotation frequency", self.rotation_frequency);
        }
        if !(self.max_angular_rate > 0.0) {
            return bad("angular rate", self.max_angular_rate);
        }
        if !self.k_u.is_finite() || !self.k_z.is_finite() || !self.lookat_angle.is_finite() {
            return Err(Error::Config("controller gains and angle must be finite".into()));
        }
        Ok(())
    }

    /// World-z travel between viewpoint switches, `None` when rotation is off.
    pub fn switch_distance(&self, intr: &CameraIntrinsics) -> Option<f64> {
        (self.rotation_frequency > 0.0)
            .then(|| intr.vertical_fov_length(self.z_target) / self.rotation_frequency)
    }
}

/// The model point the controller is steering by.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackedPoint {
    pub pixel: Vec2,
    pub camera: Vec3,
    pub world: Vec3,
    /// Unit centerline tangent in the camera frame, oriented upward in the world.
    pub tangent: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlOutput {
    /// Camera-frame velocity (m/s).
    pub velocity: Vec3,
    pub tracked: Option<TrackedPoint>,
}

impl ControlOutput {
    pub fn lost(&self) -> bool {
        self.tracked.is_none()
    }
}

/// Proportional branch-following law. Returns zero velocity and no tracked
/// point when no part of the primary model projects into the image.
pub fn compute_velocity(
    model: &TreeModel,
    intr: &CameraIntrinsics,
    pose: &Pose,
    params: &ControllerParams,
) -> ControlOutput {
    let lost = ControlOutput { velocity: Vec3::zeros(), tracked: None };
    let Some(primary) = &model.primary else { return lost };
    let curve = &primary.curve;
    let n = ((curve.arc_length() / 0.001).ceil() as usize).clamp(64, 4096);

    let mid_row = intr.height as f64 / 2.0;
    let mut best: Option<(f64, f64, Vec2, Vec3)> = None;
    for i in 0..=n {
        let t = i as f64 / n as f64;
        let world = curve.point(t);
        let Ok((px, _)) = intr.project(pose, &world) else { continue };
        if !intr.contains(&px) {
            continue;
        }
        let gap = (px.y - mid_row).abs();
        if best.is_none_or(|b| gap < b.0) {
            best = Some((gap, t, px, world));
        }
    }
    let Some((_, t, pixel, world)) = best else { return lost };

    let mut tangent_world = curve.derivative(t);
    if tangent_world.norm() < 1e-12 {
        return lost;
    }
    if tangent_world.z < 0.0 {
        tangent_world = -tangent_world;
    }
    let tangent = pose.vector_to_camera(&tangent_world).normalize();
    let camera = pose.to_camera(&world);

    let v = tangent
        + Vec3::x() * (params.k_u * (pixel.x - intr.width as f64 / 2.0))
        + Vec3::z() * (params.k_z * (camera.z - params.z_target));
    let velocity = v.normalize() * params.speed;
    ControlOutput { velocity, tracked: Some(TrackedPoint { pixel, camera, world, tangent }) }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Viewpoint {
    Center,
    Plus,
    Minus,
}

/// Position in the center, +θ, center, −θ viewpoint cycle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RotationState {
    pub phase: usize,
    /// World-z travel since the last switch (m).
    pub accumulated: f64,
    pub switches: usize,
}

impl RotationState {
    pub fn viewpoint(&self) -> Viewpoint {
        match self.phase % 4 {
            1 => Viewpoint::Plus,
            3 => Viewpoint::Minus,
            _ => Viewpoint::Center,
        }
    }

    /// Signed look-at angle of the current viewpoint (rad).
    pub fn angle(&self, params: &ControllerParams) -> f64 {
        match self.viewpoint() {
            Viewpoint::Center => 0.0,
            Viewpoint::Plus => params.lookat_angle,
            Viewpoint::Minus => -params.lookat_angle,
        }
    }
}

/// Accumulates upward travel and advances the viewpoint cycle when a switch
/// distance has been covered. Returns the target look-at angle (rad).
pub fn rotation_target(
    state: RotationState,
    params: &ControllerParams,
    intr: &CameraIntrinsics,
    moved_dz: f64,
) -> (f64, RotationState) {
    let Some(interval) = params.switch_distance(intr) else {
        return (0.0, RotationState { accumulated: state.accumulated + moved_dz.max(0.0), ..state });
    };
    let mut s = state;
    s.accumulated += moved_dz.max(0.0);
    while s.accumulated >= interval {
        s.accumulated -= interval;
        s.phase = (s.phase + 1) % 4;
        s.switches += 1;
    }
    (s.angle(params), s)
}

/// Moves `current` toward `target` by at most `rate * dt`.
pub fn slew(current: f64, target: f64, rate: f64, dt: f64) -> f64 {
    let step = rate * dt;
    current + (target - current).clamp(-step, step)
}

use crate::error::{Error, Result};
use crate::geometry::{Pose, Vec3};

/// Rotation of the camera rig about the vertical axis through a tracked point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Orbit {
    pub pivot: Vec3,
    /// Yaw increment for this step (rad), already rate limited.
    pub angle: f64,
}

/// Explicit Euler step of a free-flying camera. `velocity` is in the camera frame.
pub fn step_camera(pose: &Pose, velocity: &Vec3, dt: f64, orbit: Option<Orbit>) -> Result<Pose> {
    if !(dt > 0.0) {
        return Err(Error::Domain { name: "dt", value: dt });
    }
    let moved = pose.translated(&(pose.vector_to_world(velocity) * dt));
    Ok(match orbit {
        Some(o) if o.angle != 0.0 => moved.orbit_about_z(&o.pivot, o.angle).renormalized(),
        _ => moved,
    })
}

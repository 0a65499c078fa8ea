use rand::Rng;
use serde::{Deserialize, Serialize};

use super::scene::SceneSpec;
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, CubicBezier3D, Pose, Vec3};
use crate::skeleton2d::BinaryMask;

/// Mask corruption standing in for segmentation errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Corruption {
    /// Probability that a foreground pixel is flipped to background.
    pub dropout: f64,
    /// Disk radius in pixels: positive dilates, negative erodes.
    pub morph_radius: i32,
    /// Render clutter branches into the foreground.
    pub clutter: bool,
}

impl Default for Corruption {
    fn default() -> Self {
        Self::none()
    }
}

impl Corruption {
    pub const fn none() -> Self {
        Self { dropout: 0.0, morph_radius: 0, clutter: false }
    }

    pub const fn mild() -> Self {
        Self { dropout: 0.05, morph_radius: 1, clutter: false }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must be in [0, 1], got {}", self.dropout)));
        }
        Ok(())
    }
}

/// A branch as a densely sampled centerline with constant radius.
#[derive(Debug, Clone, PartialEq)]
pub struct Tube {
    pub points: Vec<Vec3>,
    pub radius: f64,
}

impl Tube {
    pub fn from_curve(curve: &CubicBezier3D, radius: f64, step: f64) -> Self {
        let n = ((curve.arc_length() / step).ceil() as usize).max(1);
        Self { points: curve.sample(n), radius }
    }
}

/// Every branch in the scene as a tube, clutter last when requested.
pub fn scene_tubes(scene: &SceneSpec, clutter: bool, step: f64) -> Vec<Tube> {
    let mut tubes = vec![Tube::from_curve(&scene.primary, scene.primary_radius, step)];
    tubes.extend(scene.side_branches.iter().map(|b| Tube::from_curve(&b.curve, b.radius, step)));
    if clutter {
        tubes.extend(scene.clutter.iter().map(|c| Tube::from_curve(&c.curve, c.radius, step)));
    }
    tubes
}

const NEAR_PLANE: f64 = 0.01;

fn rasterize(mask: &mut BinaryMask, tube: &Tube, intr: &CameraIntrinsics, pose: &Pose) {
    let (w, h) = (intr.width as f64, intr.height as f64);
    for p in &tube.points {
        let Ok((px, depth)) = intr.project(pose, p) else { continue };
        if depth < NEAR_PLANE {
            continue;
        }
        let r = tube.radius * intr.focal() / depth;
        if px.x < -r - 1.0 || px.y < -r - 1.0 || px.x > w + r || px.y > h + r {
            continue;
        }
        mask.fill_disk(&px, r);
    }
}

/// Sample spacing fine enough that consecutive disks overlap at close range.
const RENDER_STEP: f64 = 0.0004;

/// Rasterizes the scene as projected tubes and applies the corruption model.
pub fn render_mask<R: Rng>(
    scene: &SceneSpec,
    intr: &CameraIntrinsics,
    pose: &Pose,
    corruption: &Corruption,
    rng: &mut R,
) -> BinaryMask {
    let tubes = scene_tubes(scene, corruption.clutter, RENDER_STEP);
    render_tubes(&tubes, intr, pose, corruption, rng)
}

pub fn render_tubes<R: Rng>(
    tubes: &[Tube],
    intr: &CameraIntrinsics,
    pose: &Pose,
    corruption: &Corruption,
    rng: &mut R,
) -> BinaryMask {
    let mut mask = BinaryMask::for_camera(intr);
    for tube in tubes {
        rasterize(&mut mask, tube, intr, pose);
    }
    if corruption.dropout > 0.0 {
        for px in mask.data_mut() {
            if *px && rng.random_bool(corruption.dropout.min(1.0)) {
                *px = false;
            }
        }
    }
    mask.morph(corruption.morph_radius)
}

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::render::{scene_tubes, Tube};
use super::scene::SceneSpec;
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose, Vec2, Vec3};
use crate::triangulate::{Observation, PixelTrack, TrackerConfig};

/// Depth of the plane hit by rays that miss every branch (m).
pub const FAR_PLANE_DEPTH: f64 = 3.0;

const TRACK_STEP: f64 = 0.002;

/// Ground-truth pixel tracker: finds the 3D point a pixel sees in the newest
/// frame and reprojects it into the earlier frames with Gaussian noise.
#[derive(Debug, Clone)]
pub struct SyntheticTracker {
    tubes: Vec<Tube>,
    intr: CameraIntrinsics,
    cfg: TrackerConfig,
}

impl SyntheticTracker {
    pub fn new(scene: &SceneSpec, intr: CameraIntrinsics, cfg: TrackerConfig, clutter: bool) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { tubes: scene_tubes(scene, clutter, TRACK_STEP), intr, cfg })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    /// Centerline point of the nearest branch hit by the ray through `px`,
    /// or a far-plane point when nothing is hit.
    pub fn surface_point(&self, pose: &Pose, px: &Vec2) -> Vec3 {
        let ray = self.intr.ray(pose, px);
        let mut best: Option<(f64, Vec3)> = None;
        for tube in &self.tubes {
            let r = tube.radius;
            for seg in tube.points.windows(2) {
                let (d, s, t) = ray.closest_to_segment(&seg[0], &seg[1]);
                if d > r || s <= 0.0 {
                    continue;
                }
                let hit = s - (r * r - d * d).sqrt();
                if best.is_none_or(|b| hit < b.0) {
                    best = Some((hit, seg[0] + (seg[1] - seg[0]) * t));
                }
            }
        }
        match best {
            Some((_, p)) => p,
            None => {
                let along = pose.vector_to_camera(&ray.direction).z;
                ray.origin + ray.direction * (FAR_PLANE_DEPTH / along)
            }
        }
    }

    /// Tracks for `pixels` over the newest `window` poses of `history`
    /// (oldest first). Pixels outside the image give `None`.
    pub fn track<R: Rng>(
        &self,
        pixels: &[Vec2],
        history: &[Pose],
        rng: &mut R,
    ) -> Result<Vec<Option<PixelTrack>>> {
        let m = self.cfg.window;
        if history.len() < m {
            return Err(Error::InsufficientData { needed: m, got: history.len() });
        }
        let poses = &history[history.len() - m..];
        let newest = poses[m - 1];
        let noise = Normal::new(0.0, self.cfg.noise_sigma.max(0.0))
            .map_err(|_| Error::Config("tracker noise must be finite".into()))?;
        let mut out = Vec::with_capacity(pixels.len());
        for (id, px) in pixels.iter().enumerate() {
            if !self.intr.contains(px) {
                out.push(None);
                continue;
            }
            let world = self.surface_point(&newest, px);
            let mut obs = Vec::with_capacity(m);
            for pose in poses {
                let Ok((p, _)) = self.intr.project(pose, &world) else { break };
                let pixel = if self.cfg.noise_sigma > 0.0 {
                    p + Vec2::new(noise.sample(rng), noise.sample(rng))
                } else {
                    p
                };
                obs.push(Observation { pixel, pose: *pose });
            }
            out.push(if obs.len() == m { PixelTrack::new(id, obs).ok() } else { None });
        }
        Ok(out)
    }
}

/// One-shot convenience wrapper around [`SyntheticTracker`].
pub fn synth_track<R: Rng>(
    scene: &SceneSpec,
    intr: &CameraIntrinsics,
    pixels: &[Vec2],
    history: &[Pose],
    cfg: &TrackerConfig,
    clutter: bool,
    rng: &mut R,
) -> Result<Vec<Option<PixelTrack>>> {
    SyntheticTracker::new(scene, *intr, *cfg, clutter)?.track(pixels, history, rng)
}

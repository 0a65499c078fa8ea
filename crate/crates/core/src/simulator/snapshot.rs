use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::render::render_mask;
use super::scan::{run_scan, SimConfig};
use super::scene::SceneSpec;
use super::tracker::SyntheticTracker;
use crate::controller::ControllerParams;
use crate::error::{Error, Result};
use crate::geometry::{Pose, Vec2, Vec3};
use crate::model3d::{IterationReport, Modeler};
use crate::skeleton2d::BinaryMask;
use crate::triangulate::PixelTrack;

/// A frozen model iteration: the modeler state after scanning up to some
/// height, the next mask, and the tracks the tracker returned for it.
/// Replaying it times the modeling step alone.
#[derive(Debug, Clone)]
pub struct IterationSnapshot {
    pub modeler: Modeler,
    pub mask: BinaryMask,
    pub pose: Pose,
    pub pixels: Vec<Vec2>,
    pub tracks: Vec<Option<PixelTrack>>,
}

impl IterationSnapshot {
    /// Scans `scene` from the start height up to `z` and captures the
    /// iteration that would run there.
    pub fn capture(scene: &SceneSpec, cfg: &SimConfig, ctrl: &ControllerParams, z: f64) -> Result<Self> {
        let warm = SimConfig { finish_z: z, ..*cfg };
        let log = run_scan(scene, &warm, ctrl)?;
        let pose = log.final_pose;

        let mut modeler = Modeler::new(cfg.intrinsics, cfg.model, cfg.seed);
        modeler.model = log.model;
        let history: Vec<Pose> = (0..cfg.tracker.window)
            .rev()
            .map(|k| pose.translated(&(Vec3::z() * (-(k as f64) * cfg.tracker.spacing))))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mask = render_mask(scene, &cfg.intrinsics, &pose, &cfg.corruption, &mut rng);
        let tracker = SyntheticTracker::new(scene, cfg.intrinsics, cfg.tracker, cfg.corruption.clutter)?;

        let mut pixels = Vec::new();
        let mut tracks = Vec::new();
        let mut record = |px: &[Vec2]| {
            let t = tracker.track(px, &history, &mut rng).unwrap_or_else(|_| vec![None; px.len()]);
            pixels = px.to_vec();
            tracks = t.clone();
            t
        };
        modeler.clone().iterate(&mask, &pose, &mut record);
        if pixels.is_empty() {
            return Err(Error::DegenerateGeometry("nothing detected at the snapshot pose"));
        }
        Ok(Self { modeler, mask, pose, pixels, tracks })
    }

    /// Runs the captured iteration on a copy of the modeler.
    pub fn replay(&self) -> (Modeler, IterationReport) {
        let mut modeler = self.modeler.clone();
        let mut source = |px: &[Vec2]| {
            debug_assert_eq!(px.len(), self.pixels.len());
            self.tracks.clone()
        };
        let (report, _) = modeler.iterate(&self.mask, &self.pose, &mut source);
        (modeler, report)
    }
}

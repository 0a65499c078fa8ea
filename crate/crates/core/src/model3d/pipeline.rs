use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::attach::{attach_secondary, AttachOutcome};
use super::consistency::{ConsistencyTracker, Verdict};
use super::update::{update_model, UpdateOutcome};
use super::{estimate_radius, LiftedPoint, ModelParams, TreeModel};
use crate::geometry::{CameraIntrinsics, Pose, Vec2};
use crate::skeleton2d::{detect, BinaryMask, DetectParams, Detection2D, Frame2D};
use crate::triangulate::{filter_point_with, triangulate, FilterConfig, FilterVerdict, PixelTrack, RejectReason};

/// Supplies pixel tracks ending at the current frame for queried pixels.
pub trait TrackSource {
    fn tracks(&mut self, pixels: &[Vec2]) -> Vec<Option<PixelTrack>>;
}

impl<F: FnMut(&[Vec2]) -> Vec<Option<PixelTrack>>> TrackSource for F {
    fn tracks(&mut self, pixels: &[Vec2]) -> Vec<Option<PixelTrack>> {
        self(pixels)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub outcome: UpdateOutcome,
    pub primary_detected: bool,
    pub secondaries_detected: usize,
    pub attach: Vec<AttachOutcome>,
    pub queried: usize,
    pub lifted: usize,
    pub rejected_depth: usize,
    pub rejected_reprojection: usize,
    pub failed_triangulation: usize,
    pub truncated: bool,
}

/// Runs the per-iteration modeling step: 2D detection, lifting of sampled
/// pixels, primary update and secondary attachment.
#[derive(Debug, Clone)]
pub struct Modeler {
    pub intr: CameraIntrinsics,
    pub params: ModelParams,
    pub detect: DetectParams,
    pub filter: FilterConfig,
    pub model: TreeModel,
    tracker: ConsistencyTracker,
    rng: ChaCha8Rng,
}

impl Modeler {
    pub fn new(intr: CameraIntrinsics, params: ModelParams, seed: u64) -> Self {
        Self {
            intr,
            params,
            detect: DetectParams::default(),
            filter: FilterConfig::default(),
            model: TreeModel::new(),
            tracker: ConsistencyTracker::new(params.restart_after),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn tracker(&self) -> &ConsistencyTracker {
        &self.tracker
    }

    pub fn iterate(
        &mut self,
        mask: &BinaryMask,
        pose: &Pose,
        source: &mut dyn TrackSource,
    ) -> (IterationReport, Frame2D) {
        let frame = detect(mask, &self.detect);
        let dets: Vec<&Detection2D> = frame.primary.iter().chain(&frame.secondaries).collect();
        let pixels: Vec<Vec2> = dets.iter().flat_map(|d| d.samples.iter().map(|s| s.pixel)).collect();
        let tracks = if pixels.is_empty() { Vec::new() } else { source.tracks(&pixels) };

        let mut report = IterationReport {
            outcome: UpdateOutcome {
                verdict: Verdict::Inconsistent,
                consistency: None,
                inlier_fraction: None,
                added: 0,
                removed: 0,
                initialized: false,
            },
            primary_detected: frame.primary.is_some(),
            secondaries_detected: frame.secondaries.len(),
            attach: Vec::new(),
            queried: pixels.len(),
            lifted: 0,
            rejected_depth: 0,
            rejected_reprojection: 0,
            failed_triangulation: 0,
            truncated: frame.truncated,
        };

        let mut lifted_per_det: Vec<Vec<LiftedPoint>> = Vec::with_capacity(dets.len());
        let mut k = 0;
        for det in &dets {
            let line = det.polyline();
            let mut lifted = Vec::new();
            for s in &det.samples {
                let track = tracks.get(k).cloned().flatten();
                k += 1;
                let Some(track) = track else {
                    report.failed_triangulation += 1;
                    continue;
                };
                let Ok(pt) = triangulate(&track, &self.intr) else {
                    report.failed_triangulation += 1;
                    continue;
                };
                match filter_point_with(&pt, &self.filter) {
                    FilterVerdict::Keep => {}
                    FilterVerdict::Reject(RejectReason::Reprojection) => {
                        report.rejected_reprojection += 1;
                        continue;
                    }
                    FilterVerdict::Reject(_) => {
                        report.rejected_depth += 1;
                        continue;
                    }
                }
                let Ok(radius) = estimate_radius(pt.depth, s.radius_px, self.intr.focal()) else { continue };
                lifted.push(LiftedPoint {
                    position: pt.position,
                    radius,
                    depth: pt.depth,
                    image_s: line.closest(&s.pixel).1,
                });
            }
            report.lifted += lifted.len();
            lifted_per_det.push(lifted);
        }

        let primary_lifted: &[LiftedPoint] =
            if frame.primary.is_some() { &lifted_per_det[0] } else { &[] };
        report.outcome = update_model(
            &mut self.model,
            frame.primary.as_ref(),
            mask,
            primary_lifted,
            &mut self.tracker,
            &self.intr,
            pose,
            &self.params,
            &mut self.rng,
        );

        if report.outcome.verdict == Verdict::Consistent {
            self.model.reanchor_secondaries();
            let offset = usize::from(frame.primary.is_some());
            for (det, lifted) in frame.secondaries.iter().zip(&lifted_per_det[offset..]) {
                let r = attach_secondary(&mut self.model, det, lifted, &self.intr, pose, &self.params, &mut self.rng);
                report.attach.push(r);
            }
        }
        (report, frame)
    }
}

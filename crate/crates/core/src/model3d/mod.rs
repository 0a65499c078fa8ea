//! The evolving 3D tree model: consistency checks against new masks, point
//! merging, robust curve fitting, radius lifting and side-branch attachment.

mod attach;
mod consistency;
mod pipeline;
mod ransac;
mod update;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CubicBezier3D, Polyline, Vec3};
pub use crate::skeleton2d::BranchKind;

pub use attach::{attach_secondary, AttachOutcome, AttachRejection};
pub use consistency::{check_consistency, ConsistencyCheck, ConsistencyTracker, Verdict};
pub use pipeline::{IterationReport, Modeler, TrackSource};
pub use ransac::{axis_params, mean_curve_deviation, ransac_bezier, ransac_bezier_where, RansacFit, RansacParams};
pub use update::{update_model, UpdateOutcome};

/// 3D radius from a pixel radius seen at depth `z` with focal length `f`.
pub fn estimate_radius(z: f64, r_px: f64, f: f64) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::Domain { name: "z", value: z });
    }
    if !(f > 0.0) {
        return Err(Error::Domain { name: "f", value: f });
    }
    Ok(z * r_px / f)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelPoint {
    pub position: Vec3,
    pub radius: f64,
}

/// A triangulated, filtered point ready to enter the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftedPoint {
    pub position: Vec3,
    pub radius: f64,
    /// Depth in the frame that produced the point (m).
    pub depth: f64,
    /// Arc-length position of the source sample along its 2D curve (px).
    pub image_s: f64,
}

impl From<&LiftedPoint> for ModelPoint {
    fn from(l: &LiftedPoint) -> Self {
        Self { position: l.position, radius: l.radius }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attachment {
    /// Closest point on the primary centerline to the attachment ray (m).
    pub point: Vec3,
    /// Parameter of that point on the primary curve at attach time.
    pub primary_t: f64,
    /// Ray-to-centerline distance measured when the branch was attached (m).
    pub ray_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchModel {
    pub id: usize,
    pub kind: BranchKind,
    /// Centerline points ordered along the curve.
    pub points: Vec<ModelPoint>,
    pub curve: CubicBezier3D,
    pub attachment: Option<Attachment>,
}

impl BranchModel {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.points.iter().map(|p| p.position).collect()
    }

    /// Dense polyline of the fitted curve (about one vertex per millimeter).
    pub fn centerline(&self) -> Polyline<3> {
        let n = ((self.curve.arc_length() / 0.001).ceil() as usize).clamp(16, 4096);
        Polyline::new(self.curve.sample(n))
    }

    /// Unit tangent at the curve start.
    pub fn initial_tangent(&self) -> Vec3 {
        let d = self.curve.derivative(0.0);
        let n = d.norm();
        if n > 0.0 {
            d / n
        } else {
            (self.curve.end() - self.curve.start()).normalize()
        }
    }
}

/// Primary branch plus attached secondaries.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub primary: Option<BranchModel>,
    pub secondaries: Vec<BranchModel>,
    next_id: usize,
}

impl TreeModel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Assembles a model from existing branches; new ids continue after the largest one.
    pub fn from_branches(primary: Option<BranchModel>, secondaries: Vec<BranchModel>) -> Self {
        let next_id = primary.iter().chain(&secondaries).map(|b| b.id + 1).max().unwrap_or(0);
        Self { primary, secondaries, next_id }
    }

    pub(crate) fn allocate_id(&mut self) -> usize {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    /// Immutable copy that can be handed to other threads.
    pub fn snapshot(&self) -> Arc<TreeModel> {
        Arc::new(self.clone())
    }

    /// Moves every stored attachment point onto the current primary curve.
    pub fn reanchor_secondaries(&mut self) {
        let Some(primary) = &self.primary else { return };
        for b in &mut self.secondaries {
            if let Some(a) = &mut b.attachment {
                let (t, _) = primary.curve.closest(&a.point);
                a.point = primary.curve.point(t);
                a.primary_t = t;
            }
        }
    }

    pub fn branch_count(&self) -> usize {
        self.primary.iter().count() + self.secondaries.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    /// 2D distance for a projected model point to agree with a detection (px).
    pub agreement_px: f64,
    /// Fraction of agreeing projected points needed for a consistent frame.
    pub min_consistent_fraction: f64,
    pub ransac: RansacParams,
    /// Consecutive inconsistent frames that trigger a restart.
    pub restart_after: u8,
    /// Maximum ray-to-primary distance for attaching a secondary (m).
    pub attach_ray_distance: f64,
    /// Maximum distance from a fitted secondary's start to the primary (m).
    pub attach_start_distance: f64,
    /// Attachment distance under which two secondaries may be the same (m).
    pub dedupe_distance: f64,
    /// Tangent angle under which two secondaries may be the same (rad).
    pub dedupe_angle: f64,
    /// Largest angle between the primary centerline and world up (rad).
    pub primary_max_tilt: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            agreement_px: 4.0,
            min_consistent_fraction: 0.6,
            ransac: RansacParams::default(),
            restart_after: 3,
            attach_ray_distance: 0.03,
            attach_start_distance: 0.06,
            dedupe_distance: 0.02,
            dedupe_angle: 30f64.to_radians(),
            primary_max_tilt: 35f64.to_radians(),
        }
    }
}

impl ModelParams {
    pub(crate) fn tilt_limit(&self, kind: BranchKind) -> Option<f64> {
        (kind == BranchKind::Primary).then_some(self.primary_max_tilt)
    }
}

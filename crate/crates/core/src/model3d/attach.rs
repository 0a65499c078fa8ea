use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ransac::axis_params;
use super::update::{agreeing_lifted, fit_points, merge_into};
use super::{Attachment, BranchKind, BranchModel, LiftedPoint, ModelParams, ModelPoint, TreeModel};
use crate::geometry::{CameraIntrinsics, CubicBezier3D, Polyline, Pose, Vec2, Vec3};
use crate::skeleton2d::Detection2D;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AttachRejection {
    NoPrimary,
    /// The ray through the detection's start misses the primary (distance in m).
    RayMiss(f64),
    TooFewPoints,
    /// The fitted branch starts too far from the primary (distance in m).
    StartFar(f64),
    FitFailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AttachOutcome {
    Attached { id: usize, created: bool, ray_distance: f64 },
    Rejected(AttachRejection),
}

/// Nearest approach of the camera ray through `px` to the primary centerline:
/// `(distance, point on centerline)`.
fn ray_to_primary(primary: &BranchModel, intr: &CameraIntrinsics, pose: &Pose, px: &Vec2) -> (f64, Vec3) {
    let ray = intr.ray(pose, px);
    let line = primary.centerline();
    let pts = line.points();
    let mut best = (f64::INFINITY, pts[0]);
    for w in pts.windows(2) {
        let (d, _, t) = ray.closest_to_segment(&w[0], &w[1]);
        if d < best.0 {
            best = (d, w[0] + (w[1] - w[0]) * t);
        }
    }
    best
}

/// Image length over which initial directions are compared (px).
const DIRECTION_SPAN_PX: f64 = 40.0;

/// Image direction from a branch's attachment toward its first stretch in the current view.
fn projected_start_direction(branch: &BranchModel, intr: &CameraIntrinsics, pose: &Pose) -> Option<Vec2> {
    let origin = branch.attachment.map_or_else(|| branch.curve.start(), |a| a.point);
    let a = intr.project(pose, &origin).ok()?.0;
    let mut far: Option<Vec2> = None;
    for p in branch.centerline().points() {
        let Ok((b, _)) = intr.project(pose, p) else { continue };
        far = Some(b);
        if (b - a).norm() >= DIRECTION_SPAN_PX {
            break;
        }
    }
    let d = far? - a;
    (d.norm() > 1e-9).then(|| d.normalize())
}

/// Image direction of a detection from its start over the comparison span.
fn detection_direction(det: &Detection2D) -> Vec2 {
    let line = det.polyline();
    let s = DIRECTION_SPAN_PX.min(line.length());
    let d = line.at(s) - det.curve.start();
    if d.norm() > 1e-9 { d.normalize() } else { (det.curve.end() - det.curve.start()).normalize() }
}

/// Fraction of the detection's samples lying within `px` of the branch's projection.
fn projected_overlap(branch: &BranchModel, det: &Detection2D, intr: &CameraIntrinsics, pose: &Pose, px: f64) -> f64 {
    let projected: Vec<Vec2> = branch
        .centerline()
        .points()
        .iter()
        .filter_map(|p| intr.project(pose, p).ok().map(|(q, _)| q))
        .collect();
    if projected.len() < 2 || det.samples.is_empty() {
        return 0.0;
    }
    let line = Polyline::new(projected);
    let near = det.samples.iter().filter(|s| line.distance(&s.pixel) <= px).count();
    near as f64 / det.samples.len() as f64
}

fn angle_between(a: &Vec2, b: &Vec2) -> f64 {
    a.dot(b).clamp(-1.0, 1.0).acos()
}

/// Straight segment through two or three points along their principal axis.
fn line_branch(points: &[ModelPoint], anchor: &Vec3) -> CubicBezier3D {
    let pos: Vec<Vec3> = points.iter().map(|p| p.position).collect();
    let s = axis_params(&pos, Some(anchor));
    let mean = pos.iter().sum::<Vec3>() / pos.len() as f64;
    let (lo, hi) = s.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let (ilo, ihi) = (
        s.iter().position(|&v| v == lo).unwrap(),
        s.iter().position(|&v| v == hi).unwrap(),
    );
    let axis = (pos[ihi] - pos[ilo]).normalize();
    let centered = |p: &Vec3| mean + axis * (p - mean).dot(&axis);
    CubicBezier3D::line(centered(&pos[ilo]), centered(&pos[ihi]))
}

/// Checks a secondary detection against the primary and either updates a
/// matching existing secondary or adds a new one.
#[allow(clippy::too_many_arguments)]
pub fn attach_secondary<R: Rng + ?Sized>(
    tree: &mut TreeModel,
    det: &Detection2D,
    lifted: &[LiftedPoint],
    intr: &CameraIntrinsics,
    pose: &Pose,
    params: &ModelParams,
    rng: &mut R,
) -> AttachOutcome {
    let Some(primary) = &tree.primary else {
        return AttachOutcome::Rejected(AttachRejection::NoPrimary);
    };
    let (ray_distance, anchor) = ray_to_primary(primary, intr, pose, &det.curve.start());
    if ray_distance > params.attach_ray_distance {
        return AttachOutcome::Rejected(AttachRejection::RayMiss(ray_distance));
    }
    let primary_t = primary.curve.closest(&anchor).0;
    let primary_line = primary.centerline();

    let det_dir = detection_direction(det);
    let existing = tree.secondaries.iter().position(|b| {
        b.attachment.is_some_and(|a| (a.point - anchor).norm() < params.dedupe_distance)
            && (projected_start_direction(b, intr, pose)
                .is_some_and(|dir| angle_between(&dir, &det_dir) < params.dedupe_angle)
                || projected_overlap(b, det, intr, pose, 2.0 * params.agreement_px) >= 0.5)
    });

    if let Some(k) = existing {
        let branch = &tree.secondaries[k];
        let (merged, _) = merge_into(branch, det, lifted, intr, pose, params, rng);
        let id = branch.id;
        return match merged {
            Some((b, _, _)) => {
                tree.secondaries[k] = b;
                AttachOutcome::Attached { id, created: false, ray_distance }
            }
            None => AttachOutcome::Rejected(AttachRejection::FitFailed),
        };
    }

    let (pts, t) = agreeing_lifted(lifted, det, intr, pose, params.agreement_px);
    let (points, curve) = match pts.len() {
        0 | 1 => return AttachOutcome::Rejected(AttachRejection::TooFewPoints),
        2 | 3 => {
            let curve = line_branch(&pts, &anchor);
            let mut pts = pts;
            pts.sort_by(|a, b| {
                curve.closest(&a.position).0.total_cmp(&curve.closest(&b.position).0)
            });
            (pts, curve)
        }
        _ => match fit_points(&pts, &t, &params.ransac, None, rng) {
            Some(f) => (f.points, f.curve),
            None => return AttachOutcome::Rejected(AttachRejection::FitFailed),
        },
    };
    let start_gap = primary_line.distance(&curve.start());
    if start_gap > params.attach_start_distance {
        return AttachOutcome::Rejected(AttachRejection::StartFar(start_gap));
    }
    let id = tree.allocate_id();
    tree.secondaries.push(BranchModel {
        id,
        kind: BranchKind::Secondary,
        points,
        curve,
        attachment: Some(Attachment { point: anchor, primary_t, ray_distance }),
    });
    AttachOutcome::Attached { id, created: true, ray_distance }
}

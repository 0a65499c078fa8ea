use rand::Rng;
use serde::{Deserialize, Serialize};

use super::consistency::{check_consistency, ConsistencyCheck, ConsistencyTracker, Verdict};
use super::ransac::{axis_params, ransac_bezier_where, RansacParams};
use super::{BranchKind, BranchModel, LiftedPoint, ModelParams, ModelPoint, TreeModel};
use crate::geometry::{CameraIntrinsics, CubicBezier3D, Pose, Vec3};
use crate::skeleton2d::{BinaryMask, Detection2D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateOutcome {
    pub verdict: Verdict,
    pub consistency: Option<ConsistencyCheck>,
    /// RANSAC inlier fraction of the merged point set, when a fit ran.
    pub inlier_fraction: Option<f64>,
    pub added: usize,
    pub removed: usize,
    /// True when this update created the primary from scratch.
    pub initialized: bool,
}

impl UpdateOutcome {
    fn new(verdict: Verdict) -> Self {
        Self { verdict, consistency: None, inlier_fraction: None, added: 0, removed: 0, initialized: false }
    }
}

pub(crate) fn visible_in(intr: &CameraIntrinsics, pose: &Pose, p: &Vec3) -> Option<crate::geometry::Vec2> {
    intr.project(pose, p).ok().map(|(px, _)| px).filter(|px| intr.contains(px))
}

/// Drops points that project into the frame but stray from the detected curve.
pub(crate) fn agreeing_points(
    points: impl IntoIterator<Item = ModelPoint>,
    det: &Detection2D,
    intr: &CameraIntrinsics,
    pose: &Pose,
    tol_px: f64,
) -> Vec<ModelPoint> {
    points
        .into_iter()
        .filter(|p| visible_in(intr, pose, &p.position).is_none_or(|px| det.curve.distance(&px) <= tol_px))
        .collect()
}

/// Lifted points that agree with the detection, with their image arc positions.
pub(crate) fn agreeing_lifted(
    lifted: &[LiftedPoint],
    det: &Detection2D,
    intr: &CameraIntrinsics,
    pose: &Pose,
    tol_px: f64,
) -> (Vec<ModelPoint>, Vec<f64>) {
    lifted
        .iter()
        .filter(|l| visible_in(intr, pose, &l.position).is_none_or(|px| det.curve.distance(&px) <= tol_px))
        .map(|l| (ModelPoint::from(l), l.image_s))
        .unzip()
}

pub(crate) struct BranchFit {
    pub points: Vec<ModelPoint>,
    /// Input index of each entry of `points`.
    pub indices: Vec<usize>,
    pub curve: CubicBezier3D,
}

/// Position of each point along `reference`. Points past either end are
/// placed along the end tangent, so branch extensions keep their order even
/// where the cubic itself would curl back.
pub(crate) fn curve_params(reference: &CubicBezier3D, points: &[ModelPoint]) -> Vec<f64> {
    const END: f64 = 1e-9;
    let beyond = |t: f64, p: &Vec3| {
        let d = reference.derivative(t);
        let n2 = d.norm_squared();
        if n2 < 1e-18 { 0.0 } else { (p - reference.point(t)).dot(&d) / n2 }
    };
    points
        .iter()
        .map(|p| {
            let (t, _) = reference.closest(&p.position);
            if t >= 1.0 - END {
                1.0 + beyond(1.0, &p.position).max(0.0)
            } else if t <= END {
                beyond(0.0, &p.position).min(0.0)
            } else {
                t
            }
        })
        .collect()
}

/// False for points alongside the modeled stretch of `curve` but farther than
/// `threshold` from it, and for points past an end farther than `threshold`
/// from the line continuing the end tangent.
pub(crate) fn within_span(curve: &CubicBezier3D, p: &Vec3, threshold: f64) -> bool {
    const END: f64 = 1e-9;
    let (t, d) = curve.closest(p);
    if t > END && t < 1.0 - END {
        return d <= threshold;
    }
    let end = if t <= END { 0.0 } else { 1.0 };
    let tangent = curve.derivative(end);
    if tangent.norm() < 1e-12 {
        return true;
    }
    let dir = tangent.normalize();
    let offset = p - curve.point(end);
    (offset - dir * offset.dot(&dir)).norm() <= threshold
}

/// Robust fit of a branch to `points` at their positions `params` along the
/// branch; inliers come back ordered along the curve.
pub(crate) fn fit_points<R: Rng + ?Sized>(
    points: &[ModelPoint],
    params: &[f64],
    cfg: &RansacParams,
    max_tilt: Option<f64>,
    rng: &mut R,
) -> Option<BranchFit> {
    let positions: Vec<Vec3> = points.iter().map(|p| p.position).collect();
    let valid = |c: &CubicBezier3D| max_tilt.is_none_or(|a| within_tilt(c, a));
    let mut fit = ransac_bezier_where(&positions, Some(params), cfg, valid, rng).ok();
    if fit.as_ref().is_none_or(|f| folds(&f.curve)) {
        let mut axis = axis_params(&positions, None);
        let agree: f64 = axis.iter().zip(params).map(|(a, t)| a * t).sum::<f64>()
            - axis.iter().sum::<f64>() * params.iter().sum::<f64>() / params.len() as f64;
        if agree < 0.0 {
            axis.iter_mut().for_each(|a| *a = -*a);
        }
        if let Ok(refit) = ransac_bezier_where(&positions, Some(&axis), cfg, valid, rng) {
            if !folds(&refit.curve) {
                fit = Some(refit);
            }
        }
    }
    let fit = fit?;
    if !fit.is_trusted(cfg) {
        return None;
    }
    let mut ordered: Vec<(f64, usize)> =
        fit.inliers.iter().map(|&i| (fit.curve.closest(&positions[i]).0, i)).collect();
    ordered.sort_by(|a, b| a.0.total_cmp(&b.0));
    Some(BranchFit {
        points: ordered.iter().map(|&(_, i)| points[i]).collect(),
        indices: ordered.iter().map(|&(_, i)| i).collect(),
        curve: fit.curve,
    })
}

/// True when the tangent stays within `max_tilt` of world up everywhere.
pub(crate) fn within_tilt(curve: &CubicBezier3D, max_tilt: f64) -> bool {
    const SAMPLES: usize = 32;
    let cos = max_tilt.cos();
    (0..=SAMPLES).all(|i| {
        let d = curve.derivative(i as f64 / SAMPLES as f64);
        d.z >= cos * d.norm()
    })
}

/// True when the curve doubles back on itself relative to its chord.
pub(crate) fn folds(curve: &CubicBezier3D) -> bool {
    const SAMPLES: usize = 64;
    let chord = curve.end() - curve.start();
    (0..=SAMPLES).any(|i| curve.derivative(i as f64 / SAMPLES as f64).dot(&chord) <= 0.0)
}

/// Merges a detection's lifted points into an existing branch. `None` when
/// the merged set does not support a trusted fit.
pub(crate) fn merge_into<R: Rng + ?Sized>(
    branch: &BranchModel,
    det: &Detection2D,
    lifted: &[LiftedPoint],
    intr: &CameraIntrinsics,
    pose: &Pose,
    params: &ModelParams,
    rng: &mut R,
) -> (Option<(BranchModel, usize, usize)>, Option<f64>) {
    let old = branch.points.len();
    let kept = agreeing_points(branch.points.iter().copied(), det, intr, pose, params.agreement_px);
    let kept_len = kept.len();
    let agreeing = agreeing_points(lifted.iter().map(ModelPoint::from), det, intr, pose, params.agreement_px);
    let offered = kept_len + agreeing.len();
    let mut candidates = kept;
    candidates.extend(agreeing.into_iter().filter(|p| within_span(&branch.curve, &p.position, params.ransac.threshold)));
    let t = curve_params(&branch.curve, &candidates);
    let Some(fit) = fit_points(&candidates, &t, &params.ransac, params.tilt_limit(branch.kind), rng) else {
        return (None, None);
    };
    let old_retained = fit.indices.iter().filter(|&&i| i < kept_len).count();
    let added = fit.points.len() - old_retained;
    let fraction = fit.points.len() as f64 / offered as f64;
    if fraction < params.ransac.min_inlier_fraction {
        return (None, Some(fraction));
    }
    let merged = BranchModel {
        id: branch.id,
        kind: branch.kind,
        points: fit.points,
        curve: fit.curve,
        attachment: branch.attachment,
    };
    (Some((merged, added, old - old_retained)), Some(fraction))
}

/// One model iteration for the primary branch.
#[allow(clippy::too_many_arguments)]
pub fn update_model<R: Rng + ?Sized>(
    model: &mut TreeModel,
    det: Option<&Detection2D>,
    mask: &BinaryMask,
    lifted: &[LiftedPoint],
    tracker: &mut ConsistencyTracker,
    intr: &CameraIntrinsics,
    pose: &Pose,
    params: &ModelParams,
    rng: &mut R,
) -> UpdateOutcome {
    tracker.observe(*pose);

    let Some(primary) = model.primary.clone() else {
        if let Some(branch) = det.and_then(|d| initialize(model, d, lifted, intr, pose, params, rng)) {
            let added = branch.points.len();
            model.primary = Some(branch);
            tracker.record(true);
            return UpdateOutcome { added, initialized: true, ..UpdateOutcome::new(Verdict::Consistent) };
        }
        return UpdateOutcome::new(tracker.record(false));
    };

    let check = check_consistency(model, det, mask, intr, pose, params);
    if check.projected == 0 {
        // Nothing of the model is in view, so there is nothing to contradict:
        // seed the visible stretch from this frame alone.
        if let Some(fresh) = det.and_then(|d| initialize(model, d, lifted, intr, pose, params, rng)) {
            let added = fresh.points.len();
            model.primary = Some(join(&primary, &primary.points, fresh, params, rng));
            tracker.record(true);
            return UpdateOutcome { consistency: Some(check), added, ..UpdateOutcome::new(Verdict::Consistent) };
        }
    }
    let mut inlier_fraction = None;
    if let (true, Some(det)) = (check.consistent, det) {
        let (merged, fraction) = merge_into(&primary, det, lifted, intr, pose, params, rng);
        inlier_fraction = fraction;
        if let Some((branch, added, removed)) = merged {
            model.primary = Some(branch);
            tracker.record(true);
            return UpdateOutcome {
                consistency: Some(check),
                inlier_fraction,
                added,
                removed,
                ..UpdateOutcome::new(Verdict::Consistent)
            };
        }
    }

    let verdict = tracker.record(false);
    let mut outcome = UpdateOutcome { consistency: Some(check), inlier_fraction, ..UpdateOutcome::new(verdict) };
    if verdict == Verdict::Restart {
        let poses: Vec<Pose> = tracker.recent_poses().copied().collect();
        let remaining: Vec<ModelPoint> = primary
            .points
            .iter()
            .filter(|p| poses.iter().all(|pose| visible_in(intr, pose, &p.position).is_none()))
            .copied()
            .collect();
        outcome.removed = primary.points.len() - remaining.len();

        let fresh = det.and_then(|d| initialize(model, d, lifted, intr, pose, params, rng));
        let rebuilt = match fresh {
            Some(fresh) => {
                outcome.added = fresh.points.len();
                Some(join(&primary, &remaining, fresh, params, rng))
            }
            None => fit_points(&remaining, &curve_params(&primary.curve, &remaining), &params.ransac, Some(params.primary_max_tilt), rng)
                .map(|f| BranchModel {
                points: f.points,
                curve: f.curve,
                ..primary.clone()
            }),
        };
        model.primary = rebuilt;
    }
    outcome
}

/// Combines surviving points of `old` with a freshly seeded stretch, keeping
/// the old branch id. Falls back to the fresh stretch alone.
fn join<R: Rng + ?Sized>(
    old: &BranchModel,
    remaining: &[ModelPoint],
    fresh: BranchModel,
    params: &ModelParams,
    rng: &mut R,
) -> BranchModel {
    let fresh = BranchModel { id: old.id, ..fresh };
    if remaining.is_empty() {
        return fresh;
    }
    let mut all = remaining.to_vec();
    all.extend(fresh.points.iter().copied());
    match fit_points(&all, &curve_params(&old.curve, &all), &params.ransac, params.tilt_limit(old.kind), rng) {
        Some(f) => BranchModel { points: f.points, curve: f.curve, ..fresh },
        None => fresh,
    }
}

/// Builds a fresh primary from lifted points alone.
fn initialize<R: Rng + ?Sized>(
    model: &mut TreeModel,
    det: &Detection2D,
    lifted: &[LiftedPoint],
    intr: &CameraIntrinsics,
    pose: &Pose,
    params: &ModelParams,
    rng: &mut R,
) -> Option<BranchModel> {
    let (pts, t) = agreeing_lifted(lifted, det, intr, pose, params.agreement_px);
    let fit = fit_points(&pts, &t, &params.ransac, Some(params.primary_max_tilt), rng)?;
    Some(BranchModel {
        id: model.allocate_id(),
        kind: BranchKind::Primary,
        points: fit.points,
        curve: fit.curve,
        attachment: None,
    })
}

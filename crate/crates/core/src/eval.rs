//! Comparison of reconstructed models against simulated ground truth.

use serde::{Deserialize, Serialize};

use crate::geometry::{CameraIntrinsics, CubicBezier3D, Pose, Vec3};
use crate::model3d::{BranchModel, TreeModel};
use crate::simulator::{ScanLog, ScanStatus, SceneSpec};

/// Attachment distance beyond which a model branch and a ground-truth branch never match (m).
pub const MATCH_GATE: f64 = 0.05;

/// Pairing of a model secondary (by id) with a ground-truth side branch (by index).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchMatch {
    pub model: Option<usize>,
    pub truth: Option<usize>,
    /// Attachment distance of a matched pair (m).
    pub distance: Option<f64>,
}

impl BranchMatch {
    pub fn is_pair(&self) -> bool {
        self.model.is_some() && self.truth.is_some()
    }
}

fn attachment_of(branch: &BranchModel) -> Vec3 {
    branch.attachment.map_or_else(|| branch.curve.start(), |a| a.point)
}

/// Greedy assignment on attachment distance, closest pairs first. Every model
/// branch and every ground-truth branch appears exactly once in the output.
pub fn match_branches(model: &TreeModel, gt: &SceneSpec) -> Vec<BranchMatch> {
    let mut pairs = Vec::new();
    for (mi, m) in model.secondaries.iter().enumerate() {
        let a = attachment_of(m);
        for (gi, g) in gt.side_branches.iter().enumerate() {
            let d = (a - g.attachment()).norm();
            if d <= MATCH_GATE {
                pairs.push((d, mi, gi));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut model_used = vec![false; model.secondaries.len()];
    let mut gt_used = vec![false; gt.side_branches.len()];
    let mut out = Vec::new();
    for (d, mi, gi) in pairs {
        if model_used[mi] || gt_used[gi] {
            continue;
        }
        model_used[mi] = true;
        gt_used[gi] = true;
        out.push(BranchMatch { model: Some(model.secondaries[mi].id), truth: Some(gi), distance: Some(d) });
    }
    for (mi, used) in model_used.iter().enumerate() {
        if !used {
            out.push(BranchMatch { model: Some(model.secondaries[mi].id), truth: None, distance: None });
        }
    }
    for (gi, used) in gt_used.iter().enumerate() {
        if !used {
            out.push(BranchMatch { model: None, truth: Some(gi), distance: None });
        }
    }
    out
}

/// Mean distance from `samples` to the ground-truth curve, counting only
/// samples whose nearest ground-truth point is interior. `None` when the
/// two do not overlap.
pub fn residual_points(samples: &[Vec3], gt: &CubicBezier3D) -> Option<f64> {
    const EDGE: f64 = 1e-6;
    let mut sum = 0.0;
    let mut n = 0usize;
    for p in samples {
        let (t, d) = gt.closest(p);
        if t > EDGE && t < 1.0 - EDGE {
            sum += d;
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Points every `step` metres of arc length along `curve`.
pub fn arc_samples(curve: &CubicBezier3D, step: f64) -> Vec<Vec3> {
    let dense = curve.sample(2000);
    let mut out = vec![dense[0]];
    let mut carry = 0.0;
    for w in dense.windows(2) {
        let seg = (w[1] - w[0]).norm();
        let mut pos = step - carry;
        while pos <= seg {
            out.push(w[0] + (w[1] - w[0]) * (pos / seg));
            pos += step;
        }
        carry = seg - (pos - step);
    }
    out
}

/// Model-to-truth centerline residual (m), sampled every millimetre.
pub fn residual(branch: &BranchModel, gt: &CubicBezier3D) -> Option<f64> {
    residual_points(&arc_samples(&branch.curve, 0.001), gt)
}

/// RMSE of per-point radii against the ground-truth radius (m).
pub fn radius_rmse(branch: &BranchModel, gt_radius: f64) -> Option<f64> {
    if branch.points.is_empty() {
        return None;
    }
    let sq: f64 = branch.points.iter().map(|p| (p.radius - gt_radius).powi(2)).sum();
    Some((sq / branch.points.len() as f64).sqrt())
}

/// Whether any part of `curve` projected into the image from any of `poses`.
pub fn entered_frustum(curve: &CubicBezier3D, intr: &CameraIntrinsics, poses: &[Pose]) -> bool {
    let pts = arc_samples(curve, 0.005);
    poses.iter().any(|pose| {
        pts.iter().any(|p| intr.project(pose, p).is_ok_and(|(px, _)| intr.contains(&px)))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub seed: u64,
    pub status: ScanStatus,
    /// Millimetres from here on.
    pub pb_residual: Option<f64>,
    pub pb_radius_rmse: Option<f64>,
    pub sb_residual: Option<f64>,
    pub sb_radius_rmse: Option<f64>,
    pub model_secondaries: usize,
    pub matched: usize,
    pub spurious: usize,
    /// Ground-truth side branches inside the scanned range that entered the frustum.
    pub eligible: usize,
    pub missed: usize,
    /// Indices of eligible ground-truth branches that were matched.
    pub detected: Vec<usize>,
    pub matches: Vec<BranchMatch>,
    pub consistent_iterations: usize,
    pub iterations: usize,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Scores one finished scan.
pub fn evaluate(scene: &SceneSpec, log: &ScanLog, intr: &CameraIntrinsics) -> TrialMetrics {
    let model = &log.model;
    let mm = |v: f64| v * 1000.0;
    let pb_residual = model.primary.as_ref().and_then(|p| residual(p, &scene.primary)).map(mm);
    let pb_radius_rmse = model.primary.as_ref().and_then(|p| radius_rmse(p, scene.primary_radius)).map(mm);

    let poses = log.poses();
    let z_lo = log.start_pose.center().z;
    let z_hi = log.final_pose.center().z;
    let eligible: Vec<bool> = scene
        .side_branches
        .iter()
        .map(|b| b.attach_z >= z_lo && b.attach_z <= z_hi && entered_frustum(&b.curve, intr, &poses))
        .collect();

    let matches = match_branches(model, scene);
    let mut sb_res = Vec::new();
    let mut sb_rad = Vec::new();
    let mut detected = Vec::new();
    for m in matches.iter().filter(|m| m.is_pair()) {
        let (Some(id), Some(gi)) = (m.model, m.truth) else { continue };
        let Some(branch) = model.secondaries.iter().find(|b| b.id == id) else { continue };
        let truth = &scene.side_branches[gi];
        if let Some(r) = residual(branch, &truth.curve) {
            sb_res.push(mm(r));
        }
        if let Some(r) = radius_rmse(branch, truth.radius) {
            sb_rad.push(mm(r));
        }
        if eligible[gi] {
            detected.push(gi);
        }
    }
    detected.sort_unstable();
    let matched = matches.iter().filter(|m| m.is_pair()).count();
    let n_eligible = eligible.iter().filter(|&&e| e).count();
    TrialMetrics {
        seed: scene.seed,
        status: log.status,
        pb_residual,
        pb_radius_rmse,
        sb_residual: mean(&sb_res),
        sb_radius_rmse: mean(&sb_rad),
        model_secondaries: model.secondaries.len(),
        matched,
        spurious: model.secondaries.len() - matched,
        eligible: n_eligible,
        missed: n_eligible - detected.len(),
        detected,
        matches,
        consistent_iterations: log.consistent_iterations(),
        iterations: log.iterations.len(),
    }
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len();
        if n == 0 {
            return Stat { mean: f64::NAN, std: f64::NAN, n: 0 };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        Stat { mean, std: var.sqrt(), n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub trials: usize,
    pub completed: usize,
    pub pb_residual: Stat,
    pub pb_radius_rmse: Stat,
    pub sb_residual: Stat,
    pub sb_radius_rmse: Stat,
    /// Unmatched model secondaries over all model secondaries.
    pub spurious: f64,
    /// Unmatched eligible ground-truth branches over all eligible ones.
    pub missed: f64,
}

pub fn aggregate(trials: &[TrialMetrics]) -> MetricsReport {
    let pick = |f: fn(&TrialMetrics) -> Option<f64>| Stat::of(&trials.iter().filter_map(f).collect::<Vec<_>>());
    let model: usize = trials.iter().map(|t| t.model_secondaries).sum();
    let spurious: usize = trials.iter().map(|t| t.spurious).sum();
    let eligible: usize = trials.iter().map(|t| t.eligible).sum();
    let missed: usize = trials.iter().map(|t| t.missed).sum();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    MetricsReport {
        trials: trials.len(),
        completed: trials.iter().filter(|t| t.status.is_success()).count(),
        pb_residual: pick(|t| t.pb_residual),
        pb_radius_rmse: pick(|t| t.pb_radius_rmse),
        sb_residual: pick(|t| t.sb_residual),
        sb_radius_rmse: pick(|t| t.sb_radius_rmse),
        spurious: ratio(spurious, model),
        missed: ratio(missed, eligible),
    }
}

/// One table row: a controller parameter set and its aggregated metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub rotation_angle_deg: f64,
    pub rotation_frequency: f64,
    pub speed: f64,
    pub report: MetricsReport,
}

pub const CSV_HEADER: &str = "rot_angle_deg,rot_freq,speed_m_s,trials,completed,\
pb_resid_mm,pb_resid_std_mm,pb_rad_mm,pb_rad_std_mm,\
sb_resid_mm,sb_resid_std_mm,sb_rad_mm,sb_rad_std_mm,spurious_pct,missed_pct";

pub fn to_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let m = &r.report;
        out.push_str(&format!(
            "{},{},{},{},{},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.2},{:.2}\n",
            r.rotation_angle_deg,
            r.rotation_frequency,
            r.speed,
            m.trials,
            m.completed,
            m.pb_residual.mean,
            m.pb_residual.std,
            m.pb_radius_rmse.mean,
            m.pb_radius_rmse.std,
            m.sb_residual.mean,
            m.sb_residual.std,
            m.sb_radius_rmse.mean,
            m.sb_radius_rmse.std,
            100.0 * m.spurious,
            100.0 * m.missed,
        ));
    }
    out
}

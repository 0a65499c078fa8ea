//! Linear multi-view triangulation of tracked pixels and the depth and
//! reprojection filters applied to the results.

use nalgebra::{DMatrix, Matrix2x3, Matrix3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose, Vec2, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    /// Number of frames in a track window (`M`).
    pub window: usize,
    /// Camera travel between consecutive tracked frames (m).
    pub spacing: f64,
    /// Gaussian pixel noise added by the simulated tracker (px).
    pub noise_sigma: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self { window: 8, spacing: 0.001, noise_sigma: 0.0 }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::Config(format!("tracker window must be at least 2, got {}", self.window)));
        }
        if !(self.spacing > 0.0) {
            return Err(Error::Config(format!("tracker spacing must be positive, got {}", self.spacing)));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Config(format!("tracker noise must be non-negative, got {}", self.noise_sigma)));
        }
        Ok(())
    }
}

/// One observation of a tracked pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub pixel: Vec2,
    pub pose: Pose,
}

/// Pixel observations of one keypoint, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelTrack {
    pub id: usize,
    pub observations: Vec<Observation>,
}

impl PixelTrack {
    pub fn new(id: usize, observations: Vec<Observation>) -> Result<Self> {
        if observations.len() < 2 {
            return Err(Error::InsufficientData { needed: 2, got: observations.len() });
        }
        Ok(Self { id, observations })
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn newest(&self) -> &Observation {
        self.observations.last().expect("track is never empty")
    }
}

/// Stacked linear system `D X = 0`, two rows per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct DltSystem(pub DMatrix<f64>);

pub fn build_dlt(track: &PixelTrack, intr: &CameraIntrinsics) -> DltSystem {
    let mut d = DMatrix::zeros(2 * track.len(), 4);
    for (i, obs) in track.observations.iter().enumerate() {
        let p = intr.projection_matrix(&obs.pose);
        let (p1, p2, p3) = (p.row(0), p.row(1), p.row(2));
        d.row_mut(2 * i).copy_from(&(p3 * obs.pixel.x - p1));
        d.row_mut(2 * i + 1).copy_from(&(p3 * obs.pixel.y - p2));
    }
    DltSystem(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriangulatedPoint {
    pub position: Vec3,
    /// Mean reprojection error over the track (px).
    pub reprojection_error: f64,
    /// Worst single-frame reprojection error (px).
    pub max_reprojection_error: f64,
    /// Depth along the optical axis of the newest frame (m).
    pub depth: f64,
}

/// Homogeneous least-squares solution of the DLT system by SVD.
pub fn solve_dlt(track: &PixelTrack, intr: &CameraIntrinsics) -> Result<Vec3> {
    let first = track.observations[0].pose.center();
    let baseline = track
        .observations
        .iter()
        .map(|o| (o.pose.center() - first).norm())
        .fold(0.0, f64::max);
    if baseline < 1e-12 {
        return Err(Error::DegenerateGeometry("track poses share one camera center"));
    }

    let DltSystem(d) = build_dlt(track, intr);
    let svd = d.svd(false, true);
    let v_t = svd.v_t.ok_or(Error::DegenerateGeometry("svd did not converge"))?;
    let (k, _) = svd.singular_values.argmin();
    let h: Vector4<f64> = v_t.row(k).transpose().fixed_rows::<4>(0).into_owned();
    let h = h / h.norm();
    if h.w.abs() < 1e-12 {
        return Err(Error::PointAtInfinity);
    }
    Ok(Vec3::new(h.x / h.w, h.y / h.w, h.z / h.w))
}

fn reprojection_cost(track: &PixelTrack, intr: &CameraIntrinsics, x: &Vec3) -> Option<f64> {
    let mut cost = 0.0;
    for obs in &track.observations {
        let c = obs.pose.to_camera(x);
        if c.z <= 0.0 {
            return None;
        }
        let px = Vec2::new(intr.fx * c.x / c.z + intr.cx, intr.fy * c.y / c.z + intr.cy);
        cost += (px - obs.pixel).norm_squared();
    }
    Some(cost)
}

/// Levenberg-Marquardt refinement of a point estimate on the summed squared
/// reprojection error. The algebraic DLT optimum is pulled toward the cameras
/// under pixel noise; this step removes most of that pull.
pub fn refine_point(track: &PixelTrack, intr: &CameraIntrinsics, initial: Vec3, iterations: usize) -> Vec3 {
    let Some(mut cost) = reprojection_cost(track, intr, &initial) else { return initial };
    let mut x = initial;
    let mut lambda = 1e-3;
    for _ in 0..iterations {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vec3::zeros();
        for obs in &track.observations {
            let r = obs.pose.rotation();
            let c = obs.pose.to_camera(&x);
            let iz = 1.0 / c.z;
            let res = Vec2::new(intr.fx * c.x * iz + intr.cx, intr.fy * c.y * iz + intr.cy) - obs.pixel;
            let dpi = Matrix2x3::new(
                intr.fx * iz, 0.0, -intr.fx * c.x * iz * iz,
                0.0, intr.fy * iz, -intr.fy * c.y * iz * iz,
            );
            let j = dpi * r;
            jtj += j.transpose() * j;
            jtr += j.transpose() * res;
        }
        let mut improved = false;
        for _ in 0..10 {
            let mut a = jtj;
            for i in 0..3 {
                a[(i, i)] *= 1.0 + lambda;
            }
            let Some(step) = a.lu().solve(&(-jtr)) else { break };
            let candidate = x + step;
            match reprojection_cost(track, intr, &candidate) {
                Some(c) if c <= cost => {
                    let converged = step.norm() < 1e-12 * (1.0 + x.norm());
                    x = candidate;
                    cost = c;
                    lambda = (lambda * 0.1).max(1e-9);
                    improved = !converged;
                    break;
                }
                _ => lambda *= 10.0,
            }
        }
        if !improved {
            break;
        }
    }
    x
}

fn with_errors(track: &PixelTrack, intr: &CameraIntrinsics, position: Vec3) -> TriangulatedPoint {
    let mut sum = 0.0;
    let mut worst: f64 = 0.0;
    for obs in &track.observations {
        let err = intr
            .projection_matrix(&obs.pose)
            .project(&position)
            .map_or(f64::INFINITY, |px| (px - obs.pixel).norm());
        sum += err;
        worst = worst.max(err);
    }
    let depth = track.newest().pose.to_camera(&position).z;
    TriangulatedPoint {
        position,
        reprojection_error: sum / track.len() as f64,
        max_reprojection_error: worst,
        depth,
    }
}

/// DLT solution only, without reprojection refinement.
pub fn triangulate_linear(track: &PixelTrack, intr: &CameraIntrinsics) -> Result<TriangulatedPoint> {
    Ok(with_errors(track, intr, solve_dlt(track, intr)?))
}

/// DLT solution refined on reprojection error.
pub fn triangulate(track: &PixelTrack, intr: &CameraIntrinsics) -> Result<TriangulatedPoint> {
    let linear = solve_dlt(track, intr)?;
    Ok(with_errors(track, intr, refine_point(track, intr, linear, 20)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorAggregation {
    Mean,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub max_depth: f64,
    pub max_reprojection_px: f64,
    pub aggregation: ErrorAggregation,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { max_depth: 1.0, max_reprojection_px: 4.0, aggregation: ErrorAggregation::Mean }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    Depth,
    BehindCamera,
    Reprojection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterVerdict {
    Keep,
    Reject(RejectReason),
}

pub fn filter_point(pt: &TriangulatedPoint) -> FilterVerdict {
    filter_point_with(pt, &FilterConfig::default())
}

pub fn filter_point_with(pt: &TriangulatedPoint, cfg: &FilterConfig) -> FilterVerdict {
    let err = match cfg.aggregation {
        ErrorAggregation::Mean => pt.reprojection_error,
        ErrorAggregation::Max => pt.max_reprojection_error,
    };
    if !(pt.depth > 0.0) {
        FilterVerdict::Reject(RejectReason::BehindCamera)
    } else if pt.depth > cfg.max_depth {
        FilterVerdict::Reject(RejectReason::Depth)
    } else if !(err <= cfg.max_reprojection_px) {
        FilterVerdict::Reject(RejectReason::Reprojection)
    } else {
        FilterVerdict::Keep
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Vector3};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn sim() -> CameraIntrinsics {
        CameraIntrinsics::simulated()
    }

    /// Camera looking along world +Y, stepping along +X by `spacing` per frame.
    fn sideways_poses(m: usize, spacing: f64) -> Vec<Pose> {
        (0..m)
            .map(|i| {
                Pose::looking(
                    Vec3::new(i as f64 * spacing, -0.3, 0.0),
                    Vec3::new(0.0, 1.0, 0.0),
                    Vec3::new(0.0, 0.0, 1.0),
                )
                .unwrap()
            })
            .collect()
    }

    fn exact_track(intr: &CameraIntrinsics, poses: &[Pose], x: &Vec3) -> PixelTrack {
        let obs = poses
            .iter()
            .map(|pose| Observation { pixel: intr.project(pose, x).unwrap().0, pose: *pose })
            .collect();
        PixelTrack::new(0, obs).unwrap()
    }

    fn identity_intr() -> CameraIntrinsics {
        CameraIntrinsics { fx: 1.0, fy: 1.0, cx: 0.0, cy: 0.0, width: 2, height: 2 }
    }

    #[test]
    fn two_view_system_has_rank_three_and_known_nullspace() {
        let intr = identity_intr();
        let poses = [
            Pose::identity(),
            Pose::new(nalgebra::Matrix3::identity(), Vec3::new(0.01, 0.0, 0.0)).unwrap(),
        ];
        let x = Vec3::new(0.05, -0.02, 0.4);
        let DltSystem(d) = build_dlt(&exact_track(&intr, &poses, &x), &intr);
        assert_eq!(d.shape(), (4, 4));
        let sv = d.clone().svd(false, false).singular_values;
        let smax = sv.max();
        assert_eq!(sv.iter().filter(|&&s| s > 1e-10 * smax).count(), 3);
        let h = nalgebra::DVector::from_vec(vec![x.x, x.y, x.z, 1.0]);
        assert!((d * h).norm() < 1e-12);
    }

    #[test]
    fn rows_follow_the_stacking_rule() {
        let intr = sim();
        let poses = sideways_poses(3, 0.002);
        let track = exact_track(&intr, &poses, &Vec3::new(0.01, 0.2, 0.03));
        let DltSystem(d) = build_dlt(&track, &intr);
        for (i, obs) in track.observations.iter().enumerate() {
            let p = intr.k() * obs.pose.rotation();
            let t = intr.k() * obs.pose.translation();
            for c in 0..3 {
                let expect_u = obs.pixel.x * p[(2, c)] - p[(0, c)];
                let expect_v = obs.pixel.y * p[(2, c)] - p[(1, c)];
                assert!((d[(2 * i, c)] - expect_u).abs() < 1e-9);
                assert!((d[(2 * i + 1, c)] - expect_v).abs() < 1e-9);
            }
            assert!((d[(2 * i, 3)] - (obs.pixel.x * t.z - t.x)).abs() < 1e-9);
            assert!((d[(2 * i + 1, 3)] - (obs.pixel.y * t.z - t.y)).abs() < 1e-9);
        }
    }

    #[test]
    fn exact_observations_annihilate_the_system() {
        let intr = sim();
        let x = Vec3::new(0.02, 0.1, 0.05);
        let track = exact_track(&intr, &sideways_poses(8, 0.001), &x);
        let DltSystem(d) = build_dlt(&track, &intr);
        assert_eq!(d.shape(), (16, 4));
        let h = nalgebra::DVector::from_vec(vec![x.x, x.y, x.z, 1.0]);
        assert!((d * h).norm() < 1e-9);
    }

    #[test]
    fn noiseless_round_trip() {
        let intr = sim();
        // Camera at the world origin looking down +Z, moving along +X.
        let poses: Vec<Pose> = (0..8)
            .map(|i| Pose::new(nalgebra::Matrix3::identity(), Vec3::new(-(i as f64) * 0.001, 0.0, 0.0)).unwrap())
            .collect();
        let x = Vec3::new(0.05, 0.02, 0.4);
        let pt = triangulate(&exact_track(&intr, &poses, &x), &intr).unwrap();
        assert!((pt.position - x).norm() < 1e-6);
        assert!(pt.reprojection_error < 1e-6);
        assert!((pt.depth - 0.4).abs() < 1e-6);
    }

    #[test]
    fn identical_poses_are_degenerate() {
        let intr = sim();
        let poses = vec![sideways_poses(1, 0.0)[0]; 8];
        let track = exact_track(&intr, &poses, &Vec3::new(0.0, 0.0, 0.0));
        assert!(matches!(triangulate(&track, &intr), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn parallel_rays_give_point_at_infinity() {
        let intr = sim();
        let poses = sideways_poses(4, 0.01);
        let obs = poses.iter().map(|p| Observation { pixel: Vec2::new(160.0, 120.0), pose: *p }).collect();
        let track = PixelTrack::new(0, obs).unwrap();
        assert!(matches!(triangulate(&track, &intr), Err(Error::PointAtInfinity)));
    }

    fn median(mut v: Vec<f64>) -> f64 {
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
    }

    fn monte_carlo_median(spacing: f64, trials: usize, seed: u64) -> f64 {
        let intr = sim();
        let poses = sideways_poses(8, spacing);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Vec3::new(0.0035, -0.1, 0.0);
        let errors = (0..trials)
            .map(|_| {
                let mut track = exact_track(&intr, &poses, &x);
                for o in &mut track.observations {
                    o.pixel += Vec2::new(noise.sample(&mut rng), noise.sample(&mut rng));
                }
                triangulate(&track, &intr).map_or(f64::INFINITY, |p| (p.position - x).norm())
            })
            .collect();
        median(errors)
    }

    #[test]
    fn noisy_median_error_at_desk_scale() {
        // 0.2 m depth, 8 frames 1 mm apart (7 mm total baseline), sigma 0.5 px.
        let m = monte_carlo_median(0.001, 1000, 11);
        eprintln!("median triangulation error {:.2} mm", m * 1e3);
        assert!(m < 0.015, "median error {m}");
    }

    #[test]
    fn wider_baseline_does_not_increase_error() {
        let narrow = monte_carlo_median(0.001, 1000, 5);
        let wide = monte_carlo_median(0.002, 1000, 5);
        assert!(wide <= narrow, "wide {wide} narrow {narrow}");
    }

    #[test]
    fn filter_examples() {
        let pt = |depth, err| TriangulatedPoint {
            position: Vec3::zeros(),
            reprojection_error: err,
            max_reprojection_error: err,
            depth,
        };
        assert_eq!(filter_point(&pt(0.3, 1.0)), FilterVerdict::Keep);
        assert_eq!(filter_point(&pt(1.2, 1.0)), FilterVerdict::Reject(RejectReason::Depth));
        assert_eq!(filter_point(&pt(0.3, 5.0)), FilterVerdict::Reject(RejectReason::Reprojection));
        assert_eq!(filter_point(&pt(-0.3, 1.0)), FilterVerdict::Reject(RejectReason::BehindCamera));
        assert_eq!(filter_point(&pt(1.0, 4.0)), FilterVerdict::Keep);
        let mut worst = pt(0.3, 1.0);
        worst.max_reprojection_error = 6.0;
        let cfg = FilterConfig { aggregation: ErrorAggregation::Max, ..Default::default() };
        assert_eq!(filter_point_with(&worst, &cfg), FilterVerdict::Reject(RejectReason::Reprojection));
        assert_eq!(filter_point(&worst), FilterVerdict::Keep);
    }

    proptest! {
        #[test]
        fn rigid_transform_invariance(
            ax in -3.0f64..3.0, ay in -3.0f64..3.0, az in -3.0f64..3.0,
            tx in -1.0f64..1.0, ty in -1.0f64..1.0, tz in -1.0f64..1.0,
            px in -0.05f64..0.05, pz in -0.05f64..0.05, depth in 0.1f64..0.9,
        ) {
            let intr = sim();
            let poses = sideways_poses(8, 0.001);
            let x = Vec3::new(px, depth - 0.3, pz);
            let base = triangulate(&exact_track(&intr, &poses, &x), &intr).unwrap();

            // World change g: x' = R x + t. Camera poses transform as P' = P g^-1.
            let r = Rotation3::from_scaled_axis(Vector3::new(ax, ay, az)).into_inner();
            let t = Vec3::new(tx, ty, tz);
            let g = Pose::new(r, t).unwrap();
            let moved: Vec<Pose> = poses.iter().map(|p| p.compose(&g.inverse())).collect();
            let xm = r * x + t;
            let out = triangulate(&exact_track(&intr, &moved, &xm), &intr).unwrap();
            prop_assert!((out.position - (r * base.position + t)).norm() < 1e-9);
            prop_assert!((out.depth - base.depth).abs() < 1e-9);
        }
    }
}

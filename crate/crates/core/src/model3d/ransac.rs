//! Robust cubic Bézier fitting to 3D point sets.

use nalgebra::{Matrix3, SymmetricEigen};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{chord_length_params, CubicBezier3D, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacParams {
    pub iterations: usize,
    pub sample_size: usize,
    /// Point-to-curve distance for an inlier (m).
    pub threshold: f64,
    /// Below this inlier fraction a fit is not trusted.
    pub min_inlier_fraction: f64,
    /// Refit-and-reclassify passes after the best hypothesis is chosen.
    pub refine_rounds: usize,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self { iterations: 100, sample_size: 4, threshold: 0.03, min_inlier_fraction: 0.6, refine_rounds: 2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacFit {
    pub curve: CubicBezier3D,
    /// Indices into the input, in input order.
    pub inliers: Vec<usize>,
    pub inlier_fraction: f64,
}

impl RansacFit {
    pub fn is_trusted(&self, params: &RansacParams) -> bool {
        self.inliers.len() >= 4 && self.inlier_fraction >= params.min_inlier_fraction
    }
}

/// Position of each point along the dominant principal axis of the set.
///
/// With `anchor`, the axis is oriented so the anchor sits at the low end;
/// otherwise so that it points toward world `+Z`.
pub fn axis_params(points: &[Vec3], anchor: Option<&Vec3>) -> Vec<f64> {
    if points.is_empty() {
        return Vec::new();
    }
    let n = points.len() as f64;
    let mean = points.iter().sum::<Vec3>() / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - mean;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov / n);
    let (k, _) = eig.eigenvalues.argmax();
    let mut axis: Vec3 = eig.eigenvectors.column(k).into_owned();
    let flip = match anchor {
        Some(a) => axis.dot(&(mean - a)) < 0.0,
        None => axis.z < 0.0,
    };
    if flip {
        axis = -axis;
    }
    points.iter().map(|p| (p - mean).dot(&axis)).collect()
}

fn normalized(params: &[f64], idx: &[usize]) -> Option<Vec<f64>> {
    let lo = idx.iter().map(|&i| params[i]).fold(f64::INFINITY, f64::min);
    let hi = idx.iter().map(|&i| params[i]).fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    (span > 0.0 && span.is_finite()).then(|| idx.iter().map(|&i| (params[i] - lo) / span).collect())
}

/// Least-squares fit of the indexed points, with shared parameters when
/// given and chord length over the indexed order otherwise.
fn fit_subset(points: &[Vec3], params: Option<&[f64]>, idx: &[usize]) -> Result<CubicBezier3D> {
    let pts: Vec<Vec3> = idx.iter().map(|&i| points[i]).collect();
    let t = match params {
        Some(p) => normalized(p, idx),
        None => chord_length_params(&pts),
    }
    .ok_or(Error::DegenerateFit("zero parameter span"))?;
    CubicBezier3D::fit_with_params(&pts, &t, None)
}

fn classify(points: &[Vec3], curve: &CubicBezier3D, lo: f64, hi: f64, threshold: f64) -> (Vec<usize>, f64) {
    let mut inliers = Vec::new();
    let mut cost = 0.0;
    for (i, p) in points.iter().enumerate() {
        let d = curve.closest_in(p, lo, hi).1;
        if d <= threshold {
            inliers.push(i);
            cost += d;
        } else {
            cost += threshold;
        }
    }
    (inliers, cost)
}

/// RANSAC over minimal samples followed by refits on the consensus set.
///
/// `params` gives each point's position along the branch (any affine scale);
/// without it the input order is taken as the branch order and chord length
/// is used.
pub fn ransac_bezier<R: Rng + ?Sized>(
    points: &[Vec3],
    params: Option<&[f64]>,
    cfg: &RansacParams,
    rng: &mut R,
) -> Result<RansacFit> {
    ransac_bezier_where(points, params, cfg, |_| true, rng)
}

/// [`ransac_bezier`] restricted to curves accepted by `valid`. Hypotheses and
/// refits that fail the check are discarded.
pub fn ransac_bezier_where<R: Rng + ?Sized>(
    points: &[Vec3],
    params: Option<&[f64]>,
    cfg: &RansacParams,
    valid: impl Fn(&CubicBezier3D) -> bool,
    rng: &mut R,
) -> Result<RansacFit> {
    let n = points.len();
    let k = cfg.sample_size.max(4);
    if n < k {
        return Err(Error::InsufficientData { needed: k, got: n });
    }
    if let Some(p) = params {
        assert_eq!(p.len(), n, "one parameter per point");
    }
    let order_key = |i: usize| params.map_or(i as f64, |p| p[i]);
    // Hypotheses built from shared parameters cover the whole branch; chord
    // hypotheses only span their own sample, so allow some extrapolation.
    let (lo, hi) = if params.is_some() { (0.0, 1.0) } else { (-0.5, 1.5) };
    let all: Vec<usize> = (0..n).collect();
    let global = params.and_then(|p| normalized(p, &all));

    let mut best: Option<(Vec<usize>, f64)> = None;
    for _ in 0..cfg.iterations {
        let mut idx = sample(rng, n, k).into_vec();
        idx.sort_by(|&a, &b| order_key(a).total_cmp(&order_key(b)));
        let hyp = match &global {
            Some(g) => {
                let pts: Vec<Vec3> = idx.iter().map(|&i| points[i]).collect();
                let t: Vec<f64> = idx.iter().map(|&i| g[i]).collect();
                CubicBezier3D::fit_with_params(&pts, &t, None)
            }
            None => fit_subset(points, None, &idx),
        };
        let Ok(hyp) = hyp else { continue };
        if !valid(&hyp) {
            continue;
        }
        let (inl, cost) = classify(points, &hyp, lo, hi, cfg.threshold);
        let better = best
            .as_ref()
            .is_none_or(|(b, bc)| inl.len() > b.len() || (inl.len() == b.len() && cost < *bc));
        if better {
            best = Some((inl, cost));
        }
    }
    let (mut inliers, _) = best.ok_or(Error::DegenerateFit("no valid hypothesis"))?;
    if inliers.len() < 4 {
        return Err(Error::InsufficientData { needed: 4, got: inliers.len() });
    }

    let mut curve = fit_subset(points, params, &inliers)?;
    if !valid(&curve) {
        return Err(Error::DegenerateFit("consensus fit violates the shape constraint"));
    }
    for _ in 0..cfg.refine_rounds {
        let (next, _) = classify(points, &curve, 0.0, 1.0, cfg.threshold);
        if next.len() < 4 || next == inliers {
            break;
        }
        match fit_subset(points, params, &next) {
            Ok(c) if valid(&c) => {
                curve = c;
                inliers = next;
            }
            _ => break,
        }
    }
    if params.is_some() {
        let c = reparameterize(points, &inliers, curve);
        if valid(&c) {
            curve = c;
        }
        let scaled = robust_threshold(points, &inliers, &curve, cfg.threshold);
        let (next, _) = classify(points, &curve, 0.0, 1.0, scaled);
        if next.len() >= 4 && next != inliers {
            if let Ok(c) = fit_subset(points, params, &next).map(|c| reparameterize(points, &next, c)) {
                if valid(&c) {
                    curve = c;
                    inliers = next;
                }
            }
        }
    }
    Ok(RansacFit { curve, inlier_fraction: inliers.len() as f64 / n as f64, inliers })
}

/// Inlier distance from the median residual of the consensus set, assuming
/// roughly Gaussian scatter, bounded by a tenth of and the full `threshold`.
fn robust_threshold(points: &[Vec3], idx: &[usize], curve: &CubicBezier3D, threshold: f64) -> f64 {
    let mut d: Vec<f64> = idx.iter().map(|&i| curve.closest(&points[i]).1).collect();
    d.sort_by(f64::total_cmp);
    let median = d[d.len() / 2];
    (3.0 * 1.4826 * median).clamp(0.1 * threshold, threshold)
}

const REPARAM_PASSES: usize = 8;

/// Alternates projecting the points onto the curve and refitting with those
/// parameters, keeping each refit only while the squared error shrinks.
fn reparameterize(points: &[Vec3], idx: &[usize], mut curve: CubicBezier3D) -> CubicBezier3D {
    let pts: Vec<Vec3> = idx.iter().map(|&i| points[i]).collect();
    let project = |c: &CubicBezier3D| pts.iter().map(|p| c.closest(p)).collect::<Vec<_>>();
    let mut proj = project(&curve);
    let mut err: f64 = proj.iter().map(|(_, d)| d * d).sum();
    for _ in 0..REPARAM_PASSES {
        let t: Vec<f64> = proj.iter().map(|(t, _)| *t).collect();
        let Ok(next) = CubicBezier3D::fit_with_params(&pts, &t, None) else { break };
        let next_proj = project(&next);
        let e: f64 = next_proj.iter().map(|(_, d)| d * d).sum();
        if !(e < err) {
            break;
        }
        let converged = err - e < 1e-6 * err;
        curve = next;
        proj = next_proj;
        err = e;
        if converged {
            break;
        }
    }
    curve
}

/// Mean distance from dense samples of `a` to the curve `b`.
pub fn mean_curve_deviation(a: &CubicBezier3D, b: &CubicBezier3D) -> f64 {
    let samples = a.sample(100);
    samples.iter().map(|p| b.distance(p)).sum::<f64>() / samples.len() as f64
}

use nalgebra::{DMatrix, SVector};
use serde::{Deserialize, Serialize};

use super::chord_length_params;
use crate::error::{Error, Result};

/// Cubic Bézier curve `B(t) = Σ C(3,k) (1-t)^(3-k) t^k P_k` in `D` dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicBezier<const D: usize> {
    pub ctrl: [SVector<f64, D>; 4],
}

pub type CubicBezier2D = CubicBezier<2>;
pub type CubicBezier3D = CubicBezier<3>;

#[inline]
fn bernstein(t: f64) -> [f64; 4] {
    let s = 1.0 - t;
    [s * s * s, 3.0 * s * s * t, 3.0 * s * t * t, t * t * t]
}

fn check_domain(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::Domain { name: "t", value: t })
    }
}

impl<const D: usize> CubicBezier<D> {
    pub fn new(p0: SVector<f64, D>, p1: SVector<f64, D>, p2: SVector<f64, D>, p3: SVector<f64, D>) -> Self {
        Self { ctrl: [p0, p1, p2, p3] }
    }

    /// Straight segment with evenly spaced control points (linear in `t`).
    pub fn line(a: SVector<f64, D>, b: SVector<f64, D>) -> Self {
        let d = b - a;
        Self::new(a, a + d / 3.0, a + d * (2.0 / 3.0), b)
    }

    pub fn eval(&self, t: f64) -> Result<SVector<f64, D>> {
        check_domain(t)?;
        Ok(self.point(t))
    }

    /// Derivative `dB/dt`; not normalized.
    pub fn tangent(&self, t: f64) -> Result<SVector<f64, D>> {
        check_domain(t)?;
        Ok(self.derivative(t))
    }

    /// Evaluation without the domain check; `t` outside [0, 1] extrapolates.
    #[inline]
    pub fn point(&self, t: f64) -> SVector<f64, D> {
        let b = bernstein(t);
        self.ctrl[0] * b[0] + self.ctrl[1] * b[1] + self.ctrl[2] * b[2] + self.ctrl[3] * b[3]
    }

    #[inline]
    pub fn derivative(&self, t: f64) -> SVector<f64, D> {
        let s = 1.0 - t;
        let d0 = self.ctrl[1] - self.ctrl[0];
        let d1 = self.ctrl[2] - self.ctrl[1];
        let d2 = self.ctrl[3] - self.ctrl[2];
        (d0 * (s * s) + d1 * (2.0 * s * t) + d2 * (t * t)) * 3.0
    }

    fn second_derivative(&self, t: f64) -> SVector<f64, D> {
        let c = &self.ctrl;
        ((c[2] - c[1] * 2.0 + c[0]) * (1.0 - t) + (c[3] - c[2] * 2.0 + c[1]) * t) * 6.0
    }

    pub fn start(&self) -> SVector<f64, D> {
        self.ctrl[0]
    }

    pub fn end(&self) -> SVector<f64, D> {
        self.ctrl[3]
    }

    pub fn reversed(&self) -> Self {
        Self::new(self.ctrl[3], self.ctrl[2], self.ctrl[1], self.ctrl[0])
    }

    /// `n + 1` evenly spaced parameter samples including both ends.
    pub fn sample(&self, n: usize) -> Vec<SVector<f64, D>> {
        let n = n.max(1);
        (0..=n).map(|i| self.point(i as f64 / n as f64)).collect()
    }

    /// Arc length by dense chord summation.
    pub fn arc_length(&self) -> f64 {
        self.sample(256).windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    /// Closest point on the curve for `t ∈ [0, 1]`: `(t, distance)`.
    pub fn closest(&self, p: &SVector<f64, D>) -> (f64, f64) {
        self.closest_in(p, 0.0, 1.0)
    }

    /// Closest point for `t ∈ [lo, hi]`; the range may extend past [0, 1].
    pub fn closest_in(&self, p: &SVector<f64, D>, lo: f64, hi: f64) -> (f64, f64) {
        const COARSE: usize = 32;
        let mut best_t = lo;
        let mut best_d2 = f64::INFINITY;
        for i in 0..=COARSE {
            let t = lo + (hi - lo) * i as f64 / COARSE as f64;
            let d2 = (self.point(t) - p).norm_squared();
            if d2 < best_d2 {
                best_d2 = d2;
                best_t = t;
            }
        }
        // Newton on g(t) = (B(t) - p) · B'(t).
        let mut t = best_t;
        for _ in 0..8 {
            let diff = self.point(t) - p;
            let d1 = self.derivative(t);
            let g = diff.dot(&d1);
            let dg = d1.norm_squared() + diff.dot(&self.second_derivative(t));
            if dg.abs() < 1e-300 {
                break;
            }
            let next = (t - g / dg).clamp(lo, hi);
            if (next - t).abs() < 1e-12 {
                t = next;
                break;
            }
            t = next;
        }
        let d2 = (self.point(t) - p).norm_squared();
        if d2 < best_d2 {
            (t, d2.sqrt())
        } else {
            (best_t, best_d2.sqrt())
        }
    }

    pub fn distance(&self, p: &SVector<f64, D>) -> f64 {
        self.closest(p).1
    }

    /// Polar form of the cubic, symmetric in its three arguments.
    fn blossom(&self, u: [f64; 3]) -> SVector<f64, D> {
        let mut pts = self.ctrl.to_vec();
        for (level, &t) in u.iter().enumerate() {
            for i in 0..3 - level {
                pts[i] = pts[i] * (1.0 - t) + pts[i + 1] * t;
            }
        }
        pts[0]
    }

    /// The same curve restricted (or extended) to `[a, b]`, reparameterized
    /// onto [0, 1].
    pub fn segment(&self, a: f64, b: f64) -> Self {
        Self::new(
            self.blossom([a, a, a]),
            self.blossom([a, a, b]),
            self.blossom([a, b, b]),
            self.blossom([b, b, b]),
        )
    }

    /// Least-squares cubic Bézier through ordered points using chord-length
    /// parameters. Endpoints are not pinned to the first/last point.
    pub fn fit(points: &[SVector<f64, D>], weights: Option<&[f64]>) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::InsufficientData { needed: 4, got: points.len() });
        }
        let params = chord_length_params(points)
            .ok_or(Error::DegenerateFit("all points coincide"))?;
        Self::fit_with_params(points, &params, weights)
    }

    /// Weighted least squares with caller-supplied parameters `t_i`.
    pub fn fit_with_params(
        points: &[SVector<f64, D>],
        params: &[f64],
        weights: Option<&[f64]>,
    ) -> Result<Self> {
        let n = points.len();
        if n < 4 {
            return Err(Error::InsufficientData { needed: 4, got: n });
        }
        assert_eq!(params.len(), n, "one parameter per point");
        if let Some(w) = weights {
            assert_eq!(w.len(), n, "one weight per point");
        }
        let mut a = DMatrix::<f64>::zeros(n, 4);
        let mut rhs = DMatrix::<f64>::zeros(n, D);
        for (i, (p, &t)) in points.iter().zip(params).enumerate() {
            let w = weights.map_or(1.0, |w| w[i]);
            if !(w >= 0.0) {
                return Err(Error::Domain { name: "weight", value: w });
            }
            let sw = w.sqrt();
            for (k, b) in bernstein(t).iter().enumerate() {
                a[(i, k)] = b * sw;
            }
            for d in 0..D {
                rhs[(i, d)] = p[d] * sw;
            }
        }
        let svd = a.svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smax > 0.0) || smin / smax < 1e-10 {
            return Err(Error::DegenerateFit("rank-deficient normal system"));
        }
        let sol = svd
            .solve(&rhs, 0.0)
            .map_err(|_| Error::DegenerateFit("svd solve failed"))?;
        let mut ctrl = [SVector::<f64, D>::zeros(); 4];
        for (k, c) in ctrl.iter_mut().enumerate() {
            for d in 0..D {
                c[d] = sol[(k, d)];
            }
        }
        Ok(Self { ctrl })
    }

    /// Sum of squared distances from `points` to `B(t_i)` at chord-length parameters.
    pub fn chord_residual(&self, points: &[SVector<f64, D>]) -> f64 {
        match chord_length_params(points) {
            Some(params) => points
                .iter()
                .zip(params)
                .map(|(p, t)| (self.point(t) - p).norm_squared())
                .sum(),
            None => 0.0,
        }
    }
}

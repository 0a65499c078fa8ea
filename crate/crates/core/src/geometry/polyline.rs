use nalgebra::SVector;

/// Ordered point chain with cumulative arc length.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline<const D: usize> {
    points: Vec<SVector<f64, D>>,
    cum: Vec<f64>,
}

impl<const D: usize> Polyline<D> {
    pub fn new(points: Vec<SVector<f64, D>>) -> Self {
        let mut cum = Vec::with_capacity(points.len());
        let mut acc = 0.0;
        for (i, p) in points.iter().enumerate() {
            if i > 0 {
                acc += (p - points[i - 1]).norm();
            }
            cum.push(acc);
        }
        Self { points, cum }
    }

    pub fn points(&self) -> &[SVector<f64, D>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.cum.last().copied().unwrap_or(0.0)
    }

    /// Point at arc length `s`, clamped to the chain.
    pub fn at(&self, s: f64) -> SVector<f64, D> {
        match self.points.len() {
            0 => SVector::zeros(),
            1 => self.points[0],
            n => {
                let s = s.clamp(0.0, self.length());
                let i = self.cum.partition_point(|&c| c <= s).clamp(1, n - 1);
                let seg = self.cum[i] - self.cum[i - 1];
                let f = if seg > 0.0 { (s - self.cum[i - 1]) / seg } else { 0.0 };
                self.points[i - 1] + (self.points[i] - self.points[i - 1]) * f
            }
        }
    }

    /// Unit direction of the segment containing arc length `s`.
    pub fn direction_at(&self, s: f64) -> Option<SVector<f64, D>> {
        let n = self.points.len();
        if n < 2 {
            return None;
        }
        let s = s.clamp(0.0, self.length());
        let i = self.cum.partition_point(|&c| c <= s).clamp(1, n - 1);
        (self.points[i] - self.points[i - 1])
            .try_normalize(1e-15)
            .or_else(|| (self.points[n - 1] - self.points[0]).try_normalize(1e-15))
    }

    /// Points every `step` of arc length, always including both ends.
    pub fn resample(&self, step: f64) -> Vec<SVector<f64, D>> {
        let len = self.length();
        if self.points.len() < 2 || !(step > 0.0) || len == 0.0 {
            return self.points.first().copied().into_iter().collect();
        }
        let n = (len / step).floor() as usize;
        let mut out: Vec<_> = (0..=n).map(|i| self.at(i as f64 * step)).collect();
        if len - n as f64 * step > 1e-9 * len.max(1.0) {
            out.push(self.at(len));
        }
        out
    }

    /// Nearest point on the chain: `(distance, arc length at the foot point)`.
    pub fn closest(&self, p: &SVector<f64, D>) -> (f64, f64) {
        match self.points.len() {
            0 => (f64::INFINITY, 0.0),
            1 => ((self.points[0] - p).norm(), 0.0),
            _ => {
                let mut best = (f64::INFINITY, 0.0);
                for i in 1..self.points.len() {
                    let a = self.points[i - 1];
                    let d = self.points[i] - a;
                    let l2 = d.norm_squared();
                    let f = if l2 > 0.0 { ((p - a).dot(&d) / l2).clamp(0.0, 1.0) } else { 0.0 };
                    let dist = (a + d * f - p).norm();
                    if dist < best.0 {
                        best = (dist, self.cum[i - 1] + f * (self.cum[i] - self.cum[i - 1]));
                    }
                }
                best
            }
        }
    }

    pub fn distance(&self, p: &SVector<f64, D>) -> f64 {
        self.closest(p).0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;

    #[test]
    fn resample_spacing_and_ends() {
        let pl = Polyline::new(vec![Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0), Vec2::new(10.0, 5.0)]);
        assert_eq!(pl.length(), 15.0);
        let pts = pl.resample(4.0);
        assert_eq!(pts.len(), 5);
        assert_eq!(pts[3], Vec2::new(10.0, 2.0));
        assert_eq!(*pts.last().unwrap(), Vec2::new(10.0, 5.0));
    }

    #[test]
    fn closest_foot_point() {
        let pl = Polyline::new(vec![Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0)]);
        let (d, s) = pl.closest(&Vec2::new(3.0, -2.0));
        assert_eq!(d, 2.0);
        assert_eq!(s, 3.0);
        assert_eq!(pl.direction_at(5.0).unwrap(), Vec2::new(1.0, 0.0));
    }
}

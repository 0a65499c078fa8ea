//! Camera model, rigid poses and cubic Bézier primitives.

mod bezier;
mod camera;
mod polyline;
mod pose;

pub use bezier::{CubicBezier, CubicBezier2D, CubicBezier3D};
pub use camera::{CameraIntrinsics, ProjectionMatrix, Ray};
pub use polyline::Polyline;
pub use pose::Pose;

pub type Vec2 = nalgebra::Vector2<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;

/// Chord-length parameters of an ordered point sequence, normalized to [0, 1].
///
/// Returns `None` when the total length is zero.
pub fn chord_length_params<const D: usize>(
    points: &[nalgebra::SVector<f64, D>],
) -> Option<Vec<f64>> {
    let mut params = Vec::with_capacity(points.len());
    let mut acc = 0.0;
    params.push(0.0);
    for w in points.windows(2) {
        acc += (w[1] - w[0]).norm();
        params.push(acc);
    }
    if !(acc > 0.0) {
        return None;
    }
    for p in &mut params {
        *p /= acc;
    }
    Some(params)
}

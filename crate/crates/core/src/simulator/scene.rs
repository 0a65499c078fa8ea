use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CubicBezier3D, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneParams {
    /// Lateral jitter of the primary's control points around the vertical chord (m).
    pub primary_jitter: f64,
    pub primary_radius: (f64, f64),
    /// Inclusive range for the number of side branches.
    pub side_count: (usize, usize),
    pub side_z: (f64, f64),
    /// Elevation range in degrees.
    pub elevation_deg: (f64, f64),
    pub side_length: (f64, f64),
    pub side_radius: (f64, f64),
    /// Jitter of a side branch's inner control points around its chord (m).
    pub side_curvature: f64,
    pub clutter_count: usize,
    /// Distance of clutter branches behind the primary (m).
    pub clutter_standoff: (f64, f64),
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            primary_jitter: 0.05,
            primary_radius: (0.006, 0.010),
            side_count: (4, 8),
            side_z: (0.325, 0.75),
            elevation_deg: (-15.0, 45.0),
            side_length: (0.10, 0.20),
            side_radius: (0.003, 0.006),
            side_curvature: 0.05,
            clutter_count: 0,
            clutter_standoff: (0.8, 1.3),
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<()> {
        let ordered = |name: &str, (a, b): (f64, f64)| {
            if a <= b && a.is_finite() && b.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} range is invalid: ({a}, {b})")))
            }
        };
        ordered("primary radius", self.primary_radius)?;
        ordered("side z", self.side_z)?;
        ordered("elevation", self.elevation_deg)?;
        ordered("side length", self.side_length)?;
        ordered("side radius", self.side_radius)?;
        ordered("clutter standoff", self.clutter_standoff)?;
        if self.side_count.0 > self.side_count.1 {
            return Err(Error::Config("side branch count range is invalid".into()));
        }
        if self.side_z.0 < 0.0 || self.side_z.1 > 1.0 {
            return Err(Error::Config("side branches must attach within the primary".into()));
        }
        if self.primary_radius.0 <= 0.0 || self.side_radius.0 <= 0.0 {
            return Err(Error::Config("radii must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideBranch {
    pub attach_z: f64,
    pub yaw: f64,
    pub elevation: f64,
    pub length: f64,
    pub radius: f64,
    /// Offsets of the two inner control points from the straight chord (m).
    pub bend: [Vec3; 2],
    pub curve: CubicBezier3D,
}

impl SideBranch {
    pub fn build(primary: &CubicBezier3D, attach_z: f64, yaw: f64, elevation: f64, length: f64, radius: f64, bend: [Vec3; 2]) -> Self {
        let start = primary.point(attach_z);
        let dir = Vec3::new(elevation.cos() * yaw.cos(), elevation.cos() * yaw.sin(), elevation.sin());
        let end = start + dir * length;
        let curve = CubicBezier3D::new(
            start,
            start + dir * (length / 3.0) + bend[0],
            start + dir * (2.0 * length / 3.0) + bend[1],
            end,
        );
        Self { attach_z, yaw, elevation, length, radius, bend, curve }
    }

    pub fn attachment(&self) -> Vec3 {
        self.curve.start()
    }
}

/// Branch behind the tree, rendered only when clutter is enabled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClutterBranch {
    pub curve: CubicBezier3D,
    pub radius: f64,
    pub standoff: f64,
}

/// Ground truth of one simulated tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    /// Primary centerline with `z(t) = t`.
    pub primary: CubicBezier3D,
    pub primary_radius: f64,
    pub side_branches: Vec<SideBranch>,
    pub clutter: Vec<ClutterBranch>,
}

impl SceneSpec {
    /// Straight vertical primary along the world Z axis with no side branches.
    pub fn straight(radius: f64) -> Self {
        Self {
            seed: 0,
            primary: CubicBezier3D::line(Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.0, 0.0, 1.0)),
            primary_radius: radius,
            side_branches: Vec::new(),
            clutter: Vec::new(),
        }
    }

    /// Point on the primary at height `z`.
    pub fn primary_at(&self, z: f64) -> Vec3 {
        self.primary.point(z)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn uniform<R: Rng>(rng: &mut R, (a, b): (f64, f64)) -> f64 {
    if a == b { a } else { rng.random_range(a..=b) }
}

pub fn generate_scene(seed: u64, params: &SceneParams) -> Result<SceneSpec> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let j = params.primary_jitter;
    let jitter = |rng: &mut ChaCha8Rng| {
        if j > 0.0 { (rng.random_range(-j..=j), rng.random_range(-j..=j)) } else { (0.0, 0.0) }
    };
    let ctrl: Vec<Vec3> = (0..4)
        .map(|k| {
            let (x, y) = jitter(&mut rng);
            Vec3::new(x, y, k as f64 / 3.0)
        })
        .collect();
    let primary = CubicBezier3D::new(ctrl[0], ctrl[1], ctrl[2], ctrl[3]);
    let primary_radius = uniform(&mut rng, params.primary_radius);

    let count = rng.random_range(params.side_count.0..=params.side_count.1);
    let mut side_branches = Vec::with_capacity(count);
    for _ in 0..count {
        let attach_z = uniform(&mut rng, params.side_z);
        let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let elevation = uniform(&mut rng, params.elevation_deg).to_radians();
        let length = uniform(&mut rng, params.side_length);
        let radius = uniform(&mut rng, params.side_radius);
        let c = params.side_curvature;
        let mut bend = [Vec3::zeros(); 2];
        for b in &mut bend {
            if c > 0.0 {
                *b = Vec3::new(rng.random_range(-c..=c), rng.random_range(-c..=c), rng.random_range(-c..=c));
            }
        }
        side_branches.push(SideBranch::build(&primary, attach_z, yaw, elevation, length, radius, bend));
    }

    let mut clutter = Vec::with_capacity(params.clutter_count);
    for _ in 0..params.clutter_count {
        let standoff = uniform(&mut rng, params.clutter_standoff);
        let x0 = rng.random_range(-0.3..0.3);
        let x1 = x0 + rng.random_range(-0.3..0.3);
        let a = Vec3::new(x0, standoff, -0.2);
        let b = Vec3::new(x1, standoff, 1.2);
        clutter.push(ClutterBranch {
            curve: CubicBezier3D::line(a, b),
            radius: rng.random_range(0.01..0.03),
            standoff,
        });
    }
    Ok(SceneSpec { seed, primary, primary_radius, side_branches, clutter })
}

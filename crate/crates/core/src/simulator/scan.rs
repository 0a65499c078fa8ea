use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::motion::{step_camera, Orbit};
use super::render::{render_tubes, scene_tubes, Corruption, Tube};
use super::scene::SceneSpec;
use super::tracker::SyntheticTracker;
use crate::controller::{compute_velocity, rotation_target, slew, ControllerParams, RotationState, Viewpoint};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, CubicBezier3D, Pose, Vec2, Vec3};
use crate::model3d::{IterationReport, ModelParams, Modeler, TreeModel, Verdict};
use crate::skeleton2d::{BinaryMask, Frame2D};
use crate::triangulate::{PixelTrack, TrackerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub intrinsics: CameraIntrinsics,
    pub start_z: f64,
    pub finish_z: f64,
    pub corruption: Corruption,
    pub tracker: TrackerConfig,
    /// Travel since the last successful model iteration that triggers the next one (m).
    pub iteration_travel: f64,
    pub control_rate_hz: f64,
    /// Travel without a tracked branch after which the scan is aborted (m).
    pub lost_travel_limit: f64,
    /// Simulated time limit in seconds; derived from the scan length and speed when absent.
    pub max_duration: Option<f64>,
    pub model: ModelParams,
    pub seed: u64,
    /// Keep every iteration's mask and 2D detections in the log.
    pub record_frames: bool,
    /// Control ticks between logged pose samples.
    pub log_every: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            intrinsics: CameraIntrinsics::simulated(),
            start_z: 0.275,
            finish_z: 0.75,
            corruption: Corruption::none(),
            tracker: TrackerConfig::default(),
            iteration_travel: 0.01,
            control_rate_hz: 100.0,
            lost_travel_limit: 0.05,
            max_duration: None,
            model: ModelParams::default(),
            seed: 0,
            record_frames: false,
            log_every: 10,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        self.corruption.validate()?;
        self.tracker.validate()?;
        if !(self.finish_z > self.start_z) {
            return Err(Error::Config("finish z must exceed start z".into()));
        }
        if !(self.iteration_travel > 0.0) || !(self.control_rate_hz > 0.0) || !(self.lost_travel_limit > 0.0) {
            return Err(Error::Config("iteration travel, control rate and lost-travel limit must be positive".into()));
        }
        if self.log_every == 0 {
            return Err(Error::Config("log interval must be at least one tick".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanStatus {
    Completed,
    LostBranch,
    Timeout,
}

impl ScanStatus {
    pub fn is_success(self) -> bool {
        self == ScanStatus::Completed
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScanStatus::Completed => "completed",
            ScanStatus::LostBranch => "lost-branch",
            ScanStatus::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSample {
    pub t: f64,
    pub pose: Pose,
    /// Commanded camera-frame velocity (m/s).
    pub velocity: Vec3,
    pub tracked: bool,
    /// Horizontal pixel of the tracked model point.
    pub u: Option<f64>,
    /// Camera-frame depth of the tracked model point (m).
    pub depth: Option<f64>,
    pub viewpoint: Viewpoint,
    /// Applied look-at yaw offset (rad).
    pub lookat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub t: f64,
    pub travel: f64,
    pub pose: Pose,
    pub report: IterationReport,
    /// Primary curve after the iteration.
    pub primary: Option<CubicBezier3D>,
}

/// Mask and 2D detections of one model iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub pose: Pose,
    pub mask: BinaryMask,
    pub detections: Frame2D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanLog {
    pub status: ScanStatus,
    pub duration: f64,
    /// Total camera travel (m).
    pub travel: f64,
    pub start_pose: Pose,
    pub final_pose: Pose,
    pub samples: Vec<PoseSample>,
    pub iterations: Vec<IterationLog>,
    pub switches: usize,
    pub model: TreeModel,
    #[serde(skip)]
    pub frames: Vec<FrameRecord>,
}

impl ScanLog {
    pub fn consistent_iterations(&self) -> usize {
        self.iterations.iter().filter(|i| i.report.outcome.verdict == Verdict::Consistent).count()
    }

    /// Every pose in the log, iteration poses included, in time order.
    pub fn poses(&self) -> Vec<Pose> {
        let mut all: Vec<(f64, Pose)> = self.samples.iter().map(|s| (s.t, s.pose)).collect();
        all.extend(self.iterations.iter().map(|i| (i.t, i.pose)));
        all.sort_by(|a, b| a.0.total_cmp(&b.0));
        all.into_iter().map(|(_, p)| p).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Camera pose looking along world +Y at the primary from `standoff` away.
pub fn home_pose(scene: &SceneSpec, z: f64, standoff: f64) -> Pose {
    let target = scene.primary_at(z);
    let center = Vec3::new(target.x, target.y - standoff, z);
    Pose::looking(center, Vec3::y(), Vec3::z()).expect("fixed axes are orthogonal")
}

fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

struct Perception<'a> {
    tubes: Vec<Tube>,
    tracker: SyntheticTracker,
    cfg: &'a SimConfig,
    render_rng: ChaCha8Rng,
    track_rng: ChaCha8Rng,
}

impl Perception<'_> {
    fn mask(&mut self, pose: &Pose) -> BinaryMask {
        render_tubes(&self.tubes, &self.cfg.intrinsics, pose, &self.cfg.corruption, &mut self.render_rng)
    }

    fn tracks(&mut self, pixels: &[Vec2], history: &[Pose]) -> Vec<Option<PixelTrack>> {
        self.tracker
            .track(pixels, history, &mut self.track_rng)
            .unwrap_or_else(|_| vec![None; pixels.len()])
    }
}

/// Closed-loop scan of `scene`: follows the primary upward from the start
/// height, running model iterations as the camera travels.
pub fn run_scan(scene: &SceneSpec, cfg: &SimConfig, ctrl: &ControllerParams) -> Result<ScanLog> {
    cfg.validate()?;
    ctrl.validate()?;
    let intr = cfg.intrinsics;
    let dt = 1.0 / cfg.control_rate_hz;
    let max_duration = cfg
        .max_duration
        .unwrap_or(3.0 * (cfg.finish_z - cfg.start_z) / ctrl.speed + 30.0);

    let mut perception = Perception {
        tubes: scene_tubes(scene, cfg.corruption.clutter, 0.0004),
        tracker: SyntheticTracker::new(scene, intr, cfg.tracker, cfg.corruption.clutter)?,
        cfg,
        render_rng: stream(cfg.seed, 1),
        track_rng: stream(cfg.seed, 2),
    };
    let mut modeler = Modeler::new(intr, cfg.model, cfg.seed.wrapping_add(0x5eed));

    let start_pose = home_pose(scene, cfg.start_z, ctrl.z_target);
    let mut pose = start_pose;
    let mut history: Vec<Pose> = vec![pose];
    let mut samples = Vec::new();
    let mut iterations = Vec::new();
    let mut frames = Vec::new();
    let mut rotation = RotationState::default();
    let mut lookat = 0.0;
    let mut last_velocity = pose.vector_to_camera(&(Vec3::z() * ctrl.speed));
    let (mut t, mut travel, mut since_frame, mut since_success, mut lost_travel) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut tick = 0usize;

    let status = loop {
        if pose.center().z >= cfg.finish_z {
            break ScanStatus::Completed;
        }
        if lost_travel > cfg.lost_travel_limit {
            break ScanStatus::LostBranch;
        }
        if t > max_duration {
            break ScanStatus::Timeout;
        }

        let out = compute_velocity(&modeler.model, &intr, &pose, ctrl);
        let velocity = if out.lost() { last_velocity } else { out.velocity };
        last_velocity = velocity;

        if tick.is_multiple_of(cfg.log_every) {
            samples.push(PoseSample {
                t,
                pose,
                velocity,
                tracked: !out.lost(),
                u: out.tracked.map(|p| p.pixel.x),
                depth: out.tracked.map(|p| p.camera.z),
                viewpoint: rotation.viewpoint(),
                lookat,
            });
        }

        let orbit = match out.tracked {
            Some(tp) => {
                let next = slew(lookat, rotation.angle(ctrl), ctrl.max_angular_rate, dt);
                let angle = next - lookat;
                lookat = next;
                Some(Orbit { pivot: tp.world, angle })
            }
            None => None,
        };
        let prev_center = pose.center();
        pose = step_camera(&pose, &velocity, dt, orbit)?;
        t += dt;
        tick += 1;

        let delta = pose.center() - prev_center;
        let step = delta.norm();
        travel += step;
        since_frame += step;
        since_success += step;
        if out.lost() {
            lost_travel += step;
        } else {
            lost_travel = 0.0;
        }
        let (_, next_rotation) = rotation_target(rotation, ctrl, &intr, delta.z);
        rotation = next_rotation;

        if since_frame < cfg.tracker.spacing {
            continue;
        }
        since_frame -= cfg.tracker.spacing;
        history.push(pose);
        if history.len() > cfg.tracker.window {
            history.remove(0);
        }
        if history.len() < cfg.tracker.window || since_success < cfg.iteration_travel {
            continue;
        }

        let mask = perception.mask(&pose);
        let mut source = |pixels: &[Vec2]| perception.tracks(pixels, &history);
        let (report, detections) = modeler.iterate(&mask, &pose, &mut source);
        if report.outcome.verdict == Verdict::Consistent {
            since_success = 0.0;
        }
        if cfg.record_frames {
            frames.push(FrameRecord { pose, mask, detections });
        }
        let primary = modeler.model.primary.as_ref().map(|b| b.curve);
        iterations.push(IterationLog { t, travel, pose, report, primary });
    };

    Ok(ScanLog {
        status,
        duration: t,
        travel,
        start_pose,
        final_pose: pose,
        samples,
        iterations,
        switches: rotation.switches,
        model: modeler.model,
        frames,
    })
}

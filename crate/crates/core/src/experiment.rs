//! Batches of seeded scans over controller parameter sets.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::ControllerParams;
use crate::error::{Error, Result};
use crate::eval::{aggregate, evaluate, MetricsRow, TrialMetrics};
use crate::model3d::TreeModel;
use crate::simulator::{generate_scene, run_scan, SceneParams, SceneSpec, SideBranch, SimConfig};

/// One column of the results table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    pub rotation_angle_deg: f64,
    pub rotation_frequency: f64,
    pub speed: f64,
    pub z_target: f64,
}

impl ParameterSet {
    pub fn new(rotation_angle_deg: f64, rotation_frequency: f64) -> Self {
        let d = ControllerParams::default();
        Self { rotation_angle_deg, rotation_frequency, speed: d.speed, z_target: d.z_target }
    }

    pub fn controller(&self) -> ControllerParams {
        ControllerParams {
            lookat_angle: self.rotation_angle_deg.to_radians(),
            rotation_frequency: self.rotation_frequency,
            speed: self.speed,
            z_target: self.z_target,
            ..ControllerParams::default()
        }
    }

    /// The five simulated controller settings: no rotation, then 22.5° and 45°
    /// at 1.5 and 2.5 switches per field-of-view length.
    pub fn table_sets() -> Vec<ParameterSet> {
        [(0.0, 0.0), (22.5, 1.5), (45.0, 1.5), (22.5, 2.5), (45.0, 2.5)]
            .into_iter()
            .map(|(a, f)| ParameterSet::new(a, f))
            .collect()
    }
}

/// How trial scenes are produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SceneSource {
    Random,
    /// Random scene plus one branch pointing straight away from the start view.
    PlantedAxis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub sets: Vec<ParameterSet>,
    pub trials: usize,
    pub seed_base: u64,
    pub scene: SceneParams,
    pub scenes: SceneSource,
    pub sim: SimConfig,
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
    /// Root under which each run gets its own timestamped directory.
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            sets: ParameterSet::table_sets(),
            trials: 60,
            seed_base: 0,
            scene: SceneParams::default(),
            scenes: SceneSource::Random,
            sim: SimConfig::default(),
            workers: 0,
            output_dir: PathBuf::from("runs"),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.sets.is_empty() {
            return Err(Error::Config("at least one parameter set is required".into()));
        }
        for s in &self.sets {
            s.controller().validate()?;
        }
        self.scene.validate()?;
        self.sim.validate()
    }

    pub fn scene_for(&self, trial: usize) -> Result<SceneSpec> {
        let seed = self.seed_base + trial as u64;
        match self.scenes {
            SceneSource::Random => generate_scene(seed, &self.scene),
            SceneSource::PlantedAxis => planted_axis_scene(seed, &self.scene),
        }
    }
}

/// Height of the planted branch and the clearance kept around it.
const PLANTED_Z: (f64, f64) = (0.45, 0.65);
const PLANTED_CLEARANCE: f64 = 0.06;

/// A random scene with one extra side branch pointing along the start view
/// direction (away from the camera), which the unrotated view sees end-on
/// behind the primary. It is always the last side branch.
pub fn planted_axis_scene(seed: u64, params: &SceneParams) -> Result<SceneSpec> {
    let mut scene = generate_scene(seed, params)?;
    let z = PLANTED_Z.0 + (PLANTED_Z.1 - PLANTED_Z.0) * ((seed.wrapping_mul(2654435761) % 1000) as f64 / 1000.0);
    scene.side_branches.retain(|b| (b.attach_z - z).abs() > PLANTED_CLEARANCE);
    let radius = 0.5 * (params.side_radius.0 + params.side_radius.1);
    let planted = SideBranch::build(
        &scene.primary,
        z,
        std::f64::consts::FRAC_PI_2,
        20f64.to_radians(),
        0.15,
        radius,
        [crate::geometry::Vec3::zeros(); 2],
    );
    scene.side_branches.push(planted);
    Ok(scene)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub set: usize,
    pub trial: usize,
    pub metrics: Option<TrialMetrics>,
    pub error: Option<String>,
    /// Final model of the scan; not serialized.
    #[serde(skip)]
    pub model: Option<TreeModel>,
}

/// Runs one scan and scores it, returning the metrics and the final model.
pub fn run_trial(scene: &SceneSpec, sim: &SimConfig, set: &ParameterSet) -> Result<(TrialMetrics, TreeModel)> {
    let cfg = SimConfig { seed: scene.seed, ..*sim };
    let log = run_scan(scene, &cfg, &set.controller())?;
    let metrics = evaluate(scene, &log, &cfg.intrinsics);
    Ok((metrics, log.model))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    pub rows: Vec<MetricsRow>,
    pub trials: Vec<TrialRecord>,
}

/// Runs every set on every trial scene in parallel and aggregates per set.
/// Individual failures are recorded and do not stop the batch.
pub fn run_batch(cfg: &ExperimentConfig) -> Result<BatchResult> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> =
        (0..cfg.sets.len()).flat_map(|s| (0..cfg.trials).map(move |t| (s, t))).collect();
    let work = || {
        jobs.par_iter()
            .map(|&(s, t)| {
                let outcome = cfg.scene_for(t).and_then(|scene| run_trial(&scene, &cfg.sim, &cfg.sets[s]));
                match outcome {
                    Ok((m, model)) => {
                        TrialRecord { set: s, trial: t, metrics: Some(m), error: None, model: Some(model) }
                    }
                    Err(e) => {
                        TrialRecord { set: s, trial: t, metrics: None, error: Some(e.to_string()), model: None }
                    }
                }
            })
            .collect::<Vec<_>>()
    };
    let trials = if cfg.workers == 0 {
        work()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?
            .install(work)
    };

    let rows = cfg
        .sets
        .iter()
        .enumerate()
        .map(|(s, set)| {
            let ms: Vec<TrialMetrics> = trials
                .iter()
                .filter(|r| r.set == s)
                .filter_map(|r| r.metrics.clone())
                .collect();
            let mut report = aggregate(&ms);
            report.trials = cfg.trials;
            MetricsRow {
                rotation_angle_deg: set.rotation_angle_deg,
                rotation_frequency: set.rotation_frequency,
                speed: set.speed,
                report,
            }
        })
        .collect();
    Ok(BatchResult { rows, trials })
}

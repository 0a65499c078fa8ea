use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use branchscan_core::controller::ControllerParams;
use branchscan_core::eval::{evaluate, to_csv, TrialMetrics};
use branchscan_core::experiment::{run_batch, ExperimentConfig, ParameterSet, SceneSource};
use branchscan_core::export::{
    detection_overlay, evaluation_overlay, model_overlay, save_mask, save_rgb, ModelDocument,
};
use branchscan_core::geometry::CameraIntrinsics;
use branchscan_core::simulator::{
    generate_scene, home_pose, render_mask, run_scan, Corruption, SceneParams, SceneSpec, ScanLog, SimConfig,
};
use branchscan_core::skeleton2d::{detect, DetectParams};
use branchscan_core::Error;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{BatchArgs, Cli, Command, EvalArgs, ExportDiagArgs, GenSceneArgs, ScanArgs, SimFlags};

/// Scale of the front-view evaluation images.
const OVERLAY_PX_PER_M: f64 = 800.0;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("scan failed: {0}")]
    Scan(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Scan(_) => ExitCode::from(1),
            CliError::Config(_) | CliError::Io(_) => ExitCode::from(2),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => CliError::Config(m),
            Error::Serde(m) => CliError::Config(m),
            Error::Io(m) => CliError::Io(m),
            other => CliError::Scan(other.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Scan settings file: both sections are optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanConfig {
    pub sim: SimConfig,
    pub controller: ControllerParams,
}

struct Dirs {
    runs_dir: Option<PathBuf>,
    out_dir: Option<PathBuf>,
}

impl Dirs {
    fn create(&self, command: &str, default_root: &Path) -> CliResult<PathBuf> {
        if let Some(dir) = &self.out_dir {
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
            return Ok(dir.clone());
        }
        let root = self.runs_dir.as_deref().unwrap_or(default_root);
        let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
        let mut dir = root.join(format!("{stamp}-{command}"));
        let mut n = 1;
        while dir.exists() {
            n += 1;
            dir = root.join(format!("{stamp}-{command}-{n}"));
        }
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        Ok(dir)
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    write_text(path, &text)
}

pub fn run(cli: Cli) -> CliResult<ExitCode> {
    let dirs = Dirs { runs_dir: cli.runs_dir, out_dir: cli.out_dir };
    match cli.command {
        Command::GenScene(a) => gen_scene(&dirs, a),
        Command::Scan(a) => scan(&dirs, a),
        Command::Batch(a) => batch(&dirs, a),
        Command::Eval(a) => eval(&dirs, a),
        Command::ExportDiag(a) => export_diag(&dirs, a),
    }?;
    Ok(ExitCode::SUCCESS)
}

impl SimFlags {
    fn apply(&self, sim: &mut SimConfig) {
        if self.mild {
            sim.corruption = Corruption { clutter: sim.corruption.clutter, ..Corruption::mild() };
        }
        if let Some(d) = self.dropout {
            sim.corruption.dropout = d;
        }
        if let Some(m) = self.morph {
            sim.corruption.morph_radius = m;
        }
        if self.render_clutter {
            sim.corruption.clutter = true;
        }
        if let Some(s) = self.sigma {
            sim.tracker.noise_sigma = s;
        }
        if let Some(z) = self.finish_z {
            sim.finish_z = z;
        }
    }
}

fn scene_summary(scene: &SceneSpec) -> String {
    let zs: Vec<f64> = scene.side_branches.iter().map(|b| b.attach_z).collect();
    let range = match (zs.iter().copied().reduce(f64::min), zs.iter().copied().reduce(f64::max)) {
        (Some(lo), Some(hi)) => format!("[{lo:.3}, {hi:.3}] m"),
        _ => "none".to_string(),
    };
    format!(
        "seed {}: primary radius {:.1} mm, {} side branches, side-branch z range {}, {} clutter branches",
        scene.seed,
        scene.primary_radius * 1000.0,
        scene.side_branches.len(),
        range,
        scene.clutter.len()
    )
}

fn gen_scene(dirs: &Dirs, a: GenSceneArgs) -> CliResult<()> {
    let mut params: SceneParams = match &a.config {
        Some(p) => read_json(p)?,
        None => SceneParams::default(),
    };
    if let Some(n) = a.branches {
        params.side_count = (n, n);
    }
    if let Some(n) = a.clutter {
        params.clutter_count = n;
    }
    let scene = generate_scene(a.seed, &params)?;
    let path = match a.out {
        Some(p) => p,
        None => dirs.create("gen-scene", Path::new("runs"))?.join("scene.json"),
    };
    write_text(&path, &scene.to_json()?)?;
    println!("{}", scene_summary(&scene));
    println!("wrote {}", path.display());
    Ok(())
}

fn scan(dirs: &Dirs, a: ScanArgs) -> CliResult<()> {
    let mut cfg: ScanConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => ScanConfig::default(),
    };
    let scene = match &a.scene {
        Some(p) => SceneSpec::from_json(&read_text(p)?)?,
        None => generate_scene(a.seed.unwrap_or(0), &SceneParams::default())?,
    };
    match a.seed {
        Some(s) => cfg.sim.seed = s,
        None if a.config.is_none() => cfg.sim.seed = scene.seed,
        None => {}
    }
    a.sim.apply(&mut cfg.sim);
    if let Some(s) = a.sim.speed {
        cfg.controller.speed = s;
    }
    if let Some(deg) = a.rot_angle {
        cfg.controller.lookat_angle = deg.to_radians();
    }
    if let Some(f) = a.rot_freq {
        cfg.controller.rotation_frequency = f;
    }
    if let Some(z) = a.z_target {
        cfg.controller.z_target = z;
    }
    cfg.sim.record_frames |= a.frames;
    cfg.sim.validate()?;
    cfg.controller.validate()?;

    let dir = dirs.create("scan", Path::new("runs"))?;
    write_text(&dir.join("scene.json"), &scene.to_json()?)?;
    write_json(&dir.join("config.json"), &cfg)?;
    let log = run_scan(&scene, &cfg.sim, &cfg.controller)?;
    write_text(&dir.join("log.json"), &log.to_json()?)?;
    write_text(&dir.join("model.json"), &ModelDocument::from_model(&log.model).to_json()?)?;
    if a.frames {
        let frames = dir.join("frames");
        fs::create_dir_all(&frames).map_err(|e| io_err(&frames, e))?;
        for (i, f) in log.frames.iter().enumerate() {
            save_mask(&f.mask, &frames.join(format!("iter_{i:04}_mask.pgm")))?;
            save_rgb(&detection_overlay(&f.mask, &f.detections), &frames.join(format!("iter_{i:04}_detections.png")))?;
        }
    }

    println!(
        "status {}: {:.3} m travelled in {:.1} s, {} iterations ({} consistent), {} viewpoint switches, {} secondaries",
        log.status.as_str(),
        log.travel,
        log.duration,
        log.iterations.len(),
        log.consistent_iterations(),
        log.switches,
        log.model.secondaries.len()
    );
    println!("wrote {}", dir.display());
    if log.status.is_success() {
        Ok(())
    } else {
        Err(CliError::Scan(format!("scan ended with status {}", log.status.as_str())))
    }
}

fn parse_sets(list: &str) -> CliResult<Vec<ParameterSet>> {
    list.split(',')
        .map(|item| {
            let bad = || CliError::Config(format!("parameter set {item:?} is not angle:frequency"));
            let (a, f) = item.trim().split_once(':').ok_or_else(bad)?;
            let a: f64 = a.trim().parse().map_err(|_| bad())?;
            let f: f64 = f.trim().parse().map_err(|_| bad())?;
            Ok(ParameterSet::new(a, f))
        })
        .collect()
}

fn batch(dirs: &Dirs, a: BatchArgs) -> CliResult<()> {
    let mut cfg: ExperimentConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(list) = &a.sets {
        cfg.sets = parse_sets(list)?;
    }
    if let Some(n) = a.trials {
        cfg.trials = n;
    }
    if let Some(s) = a.seed_base {
        cfg.seed_base = s;
    }
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    if a.planted {
        cfg.scenes = SceneSource::PlantedAxis;
    }
    a.sim.apply(&mut cfg.sim);
    if let Some(s) = a.sim.speed {
        cfg.sets.iter_mut().for_each(|set| set.speed = s);
    }
    cfg.validate()?;

    let dir = dirs.create("batch", &cfg.output_dir.clone())?;
    write_json(&dir.join("config.json"), &cfg)?;
    let result = run_batch(&cfg)?;
    let csv = to_csv(&result.rows);
    write_text(&dir.join("metrics.csv"), &csv)?;
    write_json(&dir.join("trials.json"), &result.trials)?;

    if a.overlays {
        let out = dir.join("overlays");
        fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
        for r in &result.trials {
            let Some(model) = &r.model else { continue };
            let scene = cfg.scene_for(r.trial)?;
            let img = evaluation_overlay(&scene, model, OVERLAY_PX_PER_M)?;
            save_rgb(&img, &out.join(format!("set{}_trial{:03}.png", r.set, r.trial)))?;
        }
    }

    for r in result.trials.iter().filter(|r| r.error.is_some()) {
        eprintln!("set {} trial {} failed: {}", r.set, r.trial, r.error.as_deref().unwrap_or_default());
    }
    print!("{csv}");
    println!("wrote {}", dir.display());
    Ok(())
}

fn print_metrics(m: &TrialMetrics) {
    let mm = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.2} mm"));
    println!("status: {}", m.status.as_str());
    println!("primary residual: {}", mm(m.pb_residual));
    println!("primary radius rmse: {}", mm(m.pb_radius_rmse));
    println!("secondary residual: {}", mm(m.sb_residual));
    println!("secondary radius rmse: {}", mm(m.sb_radius_rmse));
    println!(
        "secondaries: {} modeled, {} matched, {} spurious; {} of {} eligible missed",
        m.model_secondaries, m.matched, m.spurious, m.missed, m.eligible
    );
}

fn eval(dirs: &Dirs, a: EvalArgs) -> CliResult<()> {
    let scene = SceneSpec::from_json(&read_text(&a.scene)?)?;
    let log: ScanLog = read_json(&a.log)?;
    let intr = match &a.config {
        Some(p) => read_json::<ScanConfig>(p)?.sim.intrinsics,
        None => CameraIntrinsics::simulated(),
    };
    intr.validate()?;
    let metrics = evaluate(&scene, &log, &intr);
    let dir = dirs.create("eval", Path::new("runs"))?;
    write_json(&dir.join("metrics.json"), &metrics)?;
    if a.overlay {
        save_rgb(&evaluation_overlay(&scene, &log.model, OVERLAY_PX_PER_M)?, &dir.join("overlay.png"))?;
    }
    print_metrics(&metrics);
    println!("wrote {}", dir.display());
    Ok(())
}

fn export_diag(dirs: &Dirs, a: ExportDiagArgs) -> CliResult<()> {
    let scene = SceneSpec::from_json(&read_text(&a.scene)?)?;
    let model = match &a.model {
        Some(p) => Some(ModelDocument::from_json(&read_text(p)?)?.to_model()),
        None => None,
    };
    let corruption = Corruption { dropout: a.dropout, morph_radius: a.morph, clutter: false };
    corruption.validate()?;
    if a.standoff.is_nan() || a.standoff <= 0.0 {
        return Err(CliError::Config(format!("standoff must be positive, got {}", a.standoff)));
    }

    let intr = CameraIntrinsics::simulated();
    let pose = home_pose(&scene, a.z, a.standoff);
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mask = render_mask(&scene, &intr, &pose, &corruption, &mut rng);
    let frame = detect(&mask, &DetectParams::default());

    let dir = dirs.create("export-diag", Path::new("runs"))?;
    save_mask(&mask, &dir.join("mask.pgm"))?;
    save_mask(&mask, &dir.join("mask.png"))?;
    save_rgb(&detection_overlay(&mask, &frame), &dir.join("detections.png"))?;
    if let Some(model) = &model {
        save_rgb(&model_overlay(&mask, model, &intr, &pose), &dir.join("model_overlay.png"))?;
        save_rgb(&evaluation_overlay(&scene, model, OVERLAY_PX_PER_M)?, &dir.join("eval_overlay.png"))?;
    }
    println!(
        "{} mask pixels, primary {}, {} secondaries detected",
        mask.count(),
        if frame.primary.is_some() { "detected" } else { "not detected" },
        frame.secondaries.len()
    );
    println!("wrote {}", dir.display());
    Ok(())
}

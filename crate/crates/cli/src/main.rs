//! `branchscan`: scene generation, simulated scans, batches and diagnostics.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "branchscan", version, about = "Simulated close-up branch scanning and 3D reconstruction")]
struct Cli {
    /// Directory under which each run creates a timestamped artifact directory
    /// [default: runs, or the batch config's output_dir].
    #[arg(long, global = true, value_name = "DIR")]
    runs_dir: Option<PathBuf>,

    /// Write artifacts to exactly this directory instead of a new timestamped one.
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a random tree scene and write it as JSON.
    GenScene(GenSceneArgs),
    /// Run one closed-loop scan over a scene.
    Scan(ScanArgs),
    /// Run seeded scans over several controller settings and tabulate metrics.
    Batch(BatchArgs),
    /// Score a recorded scan against its ground-truth scene.
    Eval(EvalArgs),
    /// Render a mask from a scene and write mask, detection and model overlays.
    ExportDiag(ExportDiagArgs),
}

#[derive(Debug, Args)]
struct GenSceneArgs {
    /// Scene seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Exact number of side branches (default: random in the configured range).
    #[arg(long)]
    branches: Option<usize>,
    /// Number of background clutter branches.
    #[arg(long)]
    clutter: Option<usize>,
    /// Scene generation parameters as JSON; flags take precedence.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output file (default: scene.json in the run directory).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

/// Simulation and controller overrides shared by `scan` and `batch`.
#[derive(Debug, Args, Default, Clone)]
struct SimFlags {
    /// Tracker pixel noise standard deviation (px).
    #[arg(long)]
    sigma: Option<f64>,
    /// Fraction of mask pixels dropped at random.
    #[arg(long)]
    dropout: Option<f64>,
    /// Mask dilation (positive) or erosion (negative) radius (px).
    #[arg(long, allow_hyphen_values = true)]
    morph: Option<i32>,
    /// Use the mild corruption preset (5% dropout, 1 px dilation).
    #[arg(long)]
    mild: bool,
    /// Render background clutter branches into the masks.
    #[arg(long)]
    render_clutter: bool,
    /// Scan speed (m/s).
    #[arg(long)]
    speed: Option<f64>,
    /// Scan end height (m).
    #[arg(long)]
    finish_z: Option<f64>,
}

#[derive(Debug, Args)]
struct ScanArgs {
    /// Scene JSON file; without it a random scene is generated from --seed.
    #[arg(long, value_name = "FILE")]
    scene: Option<PathBuf>,
    /// Seed for the simulation (and for the generated scene).
    #[arg(long)]
    seed: Option<u64>,
    /// Scan configuration JSON with optional `sim` and `controller` sections.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(flatten)]
    sim: SimFlags,
    /// Look-at rotation angle (degrees).
    #[arg(long)]
    rot_angle: Option<f64>,
    /// Viewpoint switches per field-of-view length of travel.
    #[arg(long)]
    rot_freq: Option<f64>,
    /// Standoff distance from the branch (m).
    #[arg(long)]
    z_target: Option<f64>,
    /// Dump every iteration's mask and 2D detections under frames/.
    #[arg(long)]
    frames: bool,
}

#[derive(Debug, Args)]
struct BatchArgs {
    /// Experiment configuration JSON; flags take precedence.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Trials per parameter set.
    #[arg(long)]
    trials: Option<usize>,
    /// First scene seed; trial i uses seed_base + i.
    #[arg(long)]
    seed_base: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Parameter sets as angle:frequency pairs, e.g. "0:0,22.5:1.5".
    #[arg(long, value_name = "LIST")]
    sets: Option<String>,
    /// Use scenes with one planted branch pointing away from the camera.
    #[arg(long)]
    planted: bool,
    #[command(flatten)]
    sim: SimFlags,
    /// Write a ground-truth vs reconstruction image per trial.
    #[arg(long)]
    overlays: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Ground-truth scene JSON.
    #[arg(long, value_name = "FILE")]
    scene: PathBuf,
    /// Scan log JSON written by `scan`.
    #[arg(long, value_name = "FILE")]
    log: PathBuf,
    /// Scan configuration JSON (for the camera intrinsics).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Also write a ground-truth vs reconstruction image.
    #[arg(long)]
    overlay: bool,
}

#[derive(Debug, Args)]
struct ExportDiagArgs {
    /// Scene JSON file.
    #[arg(long, value_name = "FILE")]
    scene: PathBuf,
    /// Model JSON written by `scan`, drawn over the mask when given.
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
    /// Camera height (m).
    #[arg(long, default_value_t = 0.4)]
    z: f64,
    /// Camera distance from the primary (m).
    #[arg(long, default_value_t = 0.2)]
    standoff: f64,
    /// Fraction of mask pixels dropped at random.
    #[arg(long, default_value_t = 0.0)]
    dropout: f64,
    /// Mask dilation (positive) or erosion (negative) radius (px).
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    morph: i32,
    /// Seed for the mask corruption.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

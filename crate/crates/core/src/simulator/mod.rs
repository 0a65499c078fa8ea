//! Randomized tree scenes, mask rendering, a ground-truth pixel tracker and
//! the closed-loop scan driver.

mod motion;
mod render;
mod scan;
mod scene;
mod snapshot;
mod tracker;

#[cfg(test)]
mod tests;

pub use motion::{step_camera, Orbit};
pub use render::{render_mask, render_tubes, scene_tubes, Corruption, Tube};
pub use scan::{
    home_pose, run_scan, FrameRecord, IterationLog, PoseSample, ScanLog, ScanStatus, SimConfig,
};
pub use snapshot::IterationSnapshot;
pub use scene::{generate_scene, ClutterBranch, SceneParams, SceneSpec, SideBranch};
pub use tracker::{synth_track, SyntheticTracker, FAR_PLANE_DEPTH};

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{ModelParams, TreeModel};
use crate::geometry::{CameraIntrinsics, Pose};
use crate::skeleton2d::{BinaryMask, Detection2D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Consistent,
    Inconsistent,
    Restart,
}

/// Counts consecutive inconsistent frames and remembers the latest poses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyTracker {
    counter: u8,
    restart_after: u8,
    recent: VecDeque<Pose>,
}

impl Default for ConsistencyTracker {
    fn default() -> Self {
        Self::new(3)
    }
}

impl ConsistencyTracker {
    pub fn new(restart_after: u8) -> Self {
        let restart_after = restart_after.max(1);
        Self { counter: 0, restart_after, recent: VecDeque::with_capacity(restart_after as usize) }
    }

    pub fn counter(&self) -> u8 {
        self.counter
    }

    /// Poses of the most recent frames, oldest first.
    pub fn recent_poses(&self) -> impl Iterator<Item = &Pose> {
        self.recent.iter()
    }

    pub fn observe(&mut self, pose: Pose) {
        if self.recent.len() == self.restart_after as usize {
            self.recent.pop_front();
        }
        self.recent.push_back(pose);
    }

    pub fn record(&mut self, consistent: bool) -> Verdict {
        if consistent {
            self.counter = 0;
            return Verdict::Consistent;
        }
        self.counter += 1;
        if self.counter >= self.restart_after {
            self.counter = 0;
            Verdict::Restart
        } else {
            Verdict::Inconsistent
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyCheck {
    /// Model points whose projection lands inside the image.
    pub projected: usize,
    /// Of those, points on the foreground and near the detected curve.
    pub agreeing: usize,
    pub fraction: f64,
    pub consistent: bool,
}

/// Overlap between the projected primary model and a new primary detection.
pub fn check_consistency(
    model: &TreeModel,
    det: Option<&Detection2D>,
    mask: &BinaryMask,
    intr: &CameraIntrinsics,
    pose: &Pose,
    params: &ModelParams,
) -> ConsistencyCheck {
    let mut projected = 0;
    let mut agreeing = 0;
    if let Some(primary) = &model.primary {
        for p in &primary.points {
            let Ok((px, _)) = intr.project(pose, &p.position) else { continue };
            if !intr.contains(&px) {
                continue;
            }
            projected += 1;
            if let Some(det) = det {
                if mask.contains(&px) && det.curve.distance(&px) <= params.agreement_px {
                    agreeing += 1;
                }
            }
        }
    }
    let fraction = if projected == 0 { 0.0 } else { agreeing as f64 / projected as f64 };
    ConsistencyCheck {
        projected,
        agreeing,
        fraction,
        consistent: projected > 0 && fraction >= params.min_consistent_fraction,
    }
}

//! Per-episode metrics and posture checks.

use serde::{Deserialize, Serialize};

use crate::dynamics::{center_of_mass, frame_state, BodyPoses, ModelSpec, SimState};

/// Trunk tilt beyond which the posture no longer counts as upright (rad).
pub const UPRIGHT_TILT: f64 = 0.3;
/// A fall is declared when the head drops below this fraction of the
/// standing height above the feet.
pub const FALL_HEIGHT_FRACTION: f64 = 0.6;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    /// Σ over control steps of the true cost.
    pub cumulative_cost: f64,
    /// Center-of-mass x travel up to the fall (or the end).
    pub forward_distance: f64,
    pub time_upright: f64,
    /// First control-step time at which the posture was not upright.
    pub first_not_upright: Option<f64>,
    pub fall_time: Option<f64>,
    pub final_upright: bool,
    /// Σ over control steps of Σ over muscles of the activation.
    pub energy: f64,
    pub plans: u64,
    pub mean_plan_latency: f64,
    pub max_plan_latency: f64,
    /// Mean morphology gain over all muscles and control steps (N/m).
    pub mean_gain: f64,
    pub diverged: bool,
    pub duration: f64,
    pub late_rollouts: u64,
    pub gain_degenerate: u64,
    pub denominator_floored: u64,
}

impl EpisodeMetrics {
    /// Finished without a fall, divergence, or a non-upright final state.
    pub fn success(&self) -> bool {
        self.fall_time.is_none() && self.final_upright && !self.diverged
    }
}

/// Posture summary used for upright and fall detection. Models without
/// feet or pelvis frames are never upright and never fall.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostureCheck {
    pub tilt: f64,
    pub com_x: f64,
    pub support: Option<(f64, f64)>,
    pub head_height: Option<f64>,
    pub upright: bool,
    pub fallen: bool,
}

pub fn posture_check(model: &ModelSpec, state: &SimState, standing_height: f64) -> PostureCheck {
    let poses = BodyPoses::compute(model, &state.q, &state.qdot);
    let (com, _) = center_of_mass(model, &poses);
    let pelvis = model.frame_id("pelvis").map(|id| frame_state(model, &poses, id));
    let tilt = pelvis.map_or(0.0, |p| p.up.x.atan2(p.up.y).abs());
    let feet: Vec<usize> = ["foot_left", "foot_right"]
        .iter()
        .filter_map(|n| model.frame(n).map(|f| f.body))
        .collect();
    let support = if feet.is_empty() {
        None
    } else {
        model
            .contact_frames()
            .filter(|f| feet.contains(&f.body))
            .map(|f| poses.point(f.body, &f.pos).x)
            .fold(None, |acc: Option<(f64, f64)>, x| match acc {
                None => Some((x, x)),
                Some((lo, hi)) => Some((lo.min(x), hi.max(x))),
            })
    };
    let head_height = match (model.frame_id("head"), support) {
        (Some(h), Some(_)) => {
            let head = frame_state(model, &poses, h).position;
            Some(head.y - model.terrain.height(head.x))
        }
        _ => None,
    };
    let upright = pelvis.is_some()
        && tilt < UPRIGHT_TILT
        && support.is_some_and(|(lo, hi)| com.x >= lo && com.x <= hi);
    let fallen = head_height.is_some_and(|h| h < FALL_HEIGHT_FRACTION * standing_height) || tilt > 1.2;
    PostureCheck {
        tilt,
        com_x: com.x,
        support,
        head_height,
        upright,
        fallen,
    }
}

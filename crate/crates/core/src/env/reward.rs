use serde::{Deserialize, Serialize};

use crate::road::{DrivingAction, Lane};

use super::state::{Discretizer, DistanceBin};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    /// Collision.
    pub w1: f64,
    /// Normalised speed.
    pub w2: f64,
    /// Front headway.
    pub w3: f64,
    /// Acceleration effort.
    pub w4: f64,
    /// Lane.
    pub w5: f64,
    /// Handoff-aware rate.
    pub w6: f64,
    pub v_desired_mps: f64,
    /// Rate an AV needs from a station for it to count as usable, bits/s.
    pub rate_threshold_bps: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            w1: 1000.0,
            w2: 5.0,
            w3: 1.0,
            w4: 1.0,
            w5: 1.0,
            w6: 4.5 * 10f64.powf(-6.5),
            v_desired_mps: 30.0,
            rate_threshold_bps: 1e8,
        }
    }
}

/// Inputs to the driving reward for one AV and step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrivingOutcome {
    pub collided: bool,
    pub v_x_mps: f64,
    pub front_gap_m: f64,
    pub action: DrivingAction,
    pub lane: Lane,
}

pub fn speed_term(v_x: f64, v_desired: f64) -> f64 {
    (0.2 * (v_x - v_desired)).clamp(-1.0, 1.0)
}

pub fn headway_term(bin: DistanceBin) -> f64 {
    match bin {
        DistanceBin::Close => -1.0,
        DistanceBin::Mid => 0.0,
        DistanceBin::Far => 1.0,
    }
}

pub fn effort_term(action: DrivingAction) -> f64 {
    match action {
        DrivingAction::HardAccel | DrivingAction::HardDecel => -3.0,
        DrivingAction::MildAccel | DrivingAction::MildDecel => -1.0,
        _ => 0.0,
    }
}

/// `w1 c + w2 v + w3 h + w4 a + w5 l`.
pub fn reward_tran(out: &DrivingOutcome, weights: &RewardWeights, disc: &Discretizer) -> f64 {
    let c = if out.collided { -1.0 } else { 0.0 };
    let l = match out.lane {
        Lane::Left => -1.0,
        Lane::Right => 0.0,
    };
    weights.w1 * c
        + weights.w2 * speed_term(out.v_x_mps, weights.v_desired_mps)
        + weights.w3 * headway_term(disc.distance(out.front_gap_m))
        + weights.w4 * effort_term(out.action)
        + weights.w5 * l
}

/// `w6 T_q (1 - min(1, k))`.
pub fn reward_tele(weighted_rate: f64, handoff_prob: f64, weights: &RewardWeights) -> f64 {
    weights.w6 * weighted_rate * (1.0 - handoff_prob.min(1.0))
}

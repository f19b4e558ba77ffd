//! Fixed policies used as comparison points.

use crate::env::state::{ActionPair, DiscreteState, DistanceBin, TelecomAction};
use crate::env::telecom;
use crate::road::{DrivingAction, World};

use super::config::AgentKind;

/// Maintain speed; ease off when the car ahead is close, or change lanes if
/// the other lane is clear both ahead and behind.
pub fn safe_driving(s: &DiscreteState) -> DrivingAction {
    if s.d_fc != DistanceBin::Close {
        DrivingAction::Maintain
    } else if s.d_ft == DistanceBin::Far && s.d_rt == DistanceBin::Far {
        DrivingAction::LaneSwitch
    } else {
        DrivingAction::MildDecel
    }
}

/// Joint action a baseline takes in `state`. `NearestBs` ignores the
/// telecom half (the environment's selection rule does the work).
pub fn baseline_action(kind: AgentKind, state: usize) -> usize {
    let driving =
        DiscreteState::from_index(state).map_or(DrivingAction::Maintain, |s| safe_driving(&s));
    let telecom = match kind {
        AgentKind::MaxRate => TelecomAction::MaxRate,
        AgentKind::NoHandoffPenalty => TelecomAction::NoHandoffPenalty,
        _ => TelecomAction::HandoffAware,
    };
    ActionPair { driving, telecom }.index()
}

/// Geometrically nearest station, lower id on ties.
pub fn baseline_nearest(world: &World, av: usize) -> Option<usize> {
    telecom::nearest_order(world, av).first().copied()
}

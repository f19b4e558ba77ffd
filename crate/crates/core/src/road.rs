//! Two-lane ring corridor: base-station layout, point-mass vehicle motion,
//! neighbour queries and collision detection.

use std::fmt;

use log::debug;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BsKind {
    Rbs,
    Tbs,
}

impl fmt::Display for BsKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BsKind::Rbs => "rbs",
            BsKind::Tbs => "tbs",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BsLayout {
    /// Equal spacing `L / n`, first station at `L / 2n`.
    #[default]
    Uniform,
    /// One station drawn uniformly inside each of the `n` equal slots.
    Random,
}

/// Per-tier station properties copied onto every deployed BS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationSpec {
    pub bandwidth_hz: f64,
    pub quota: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadConfig {
    pub corridor_len_m: f64,
    pub lane_width_m: f64,
    pub vehicle_length_m: f64,
    /// Lateral separation below which two vehicles overlap.
    pub lateral_envelope_m: f64,
    pub dt_s: f64,
    pub n_rbs: usize,
    pub n_tbs: usize,
    pub rbs: StationSpec,
    pub tbs: StationSpec,
    pub bs_layout: BsLayout,
    /// Distance of the BS row from the right lane centre.
    pub bs_lateral_offset_m: f64,
    pub d_min_safety_m: f64,
    pub d_max_safety_m: f64,
    pub v_desired_mps: f64,
    pub v_at_mps: f64,
    pub v_max_mps: f64,
    pub lane_switch_speed_mps: f64,
    pub num_avs: usize,
    pub respawn_delay_steps: usize,
}

impl Default for RoadConfig {
    fn default() -> Self {
        Self {
            corridor_len_m: 2000.0,
            lane_width_m: 3.5,
            vehicle_length_m: 5.0,
            lateral_envelope_m: 3.0,
            dt_s: 0.5,
            n_rbs: 4,
            n_tbs: 10,
            rbs: StationSpec {
                bandwidth_hz: 4e7,
                quota: 2,
            },
            tbs: StationSpec {
                bandwidth_hz: 5e8,
                quota: 5,
            },
            bs_layout: BsLayout::Uniform,
            bs_lateral_offset_m: 5.0,
            d_min_safety_m: 15.0,
            d_max_safety_m: 50.0,
            v_desired_mps: 30.0,
            v_at_mps: 2.0,
            v_max_mps: 60.0,
            lane_switch_speed_mps: 1.5,
            num_avs: 15,
            respawn_delay_steps: 10,
        }
    }
}

impl RoadConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.corridor_len_m > 0.0) {
            return Err(Error::invalid("corridor_len_m must be positive"));
        }
        if !(self.dt_s > 0.0) {
            return Err(Error::invalid("dt_s must be positive"));
        }
        if !(0.0 < self.d_min_safety_m && self.d_min_safety_m < self.d_max_safety_m) {
            return Err(Error::invalid("need 0 < d_min_safety_m < d_max_safety_m"));
        }
        if self.num_avs == 0 {
            return Err(Error::invalid("num_avs must be at least 1"));
        }
        if self.rbs.quota == 0 || self.tbs.quota == 0 {
            return Err(Error::invalid("BS quotas must be at least 1"));
        }
        if !(self.lane_width_m > 0.0 && self.lane_switch_speed_mps > 0.0 && self.v_max_mps > 0.0) {
            return Err(Error::invalid(
                "lane width, lane-switch speed and v_max must be positive",
            ));
        }
        Ok(())
    }

    /// Steps needed to move from one lane centre to the other.
    pub fn lane_switch_steps(&self) -> usize {
        (self.lane_width_m / (self.lane_switch_speed_mps * self.dt_s)).ceil() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseStation {
    pub id: usize,
    pub kind: BsKind,
    pub x_m: f64,
    pub y_m: f64,
    pub bandwidth_hz: f64,
    pub quota: usize,
    /// AVs that listed this station among their top three this step.
    pub current_load: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Lane {
    Right,
    Left,
}

impl Lane {
    pub fn index(self) -> usize {
        match self {
            Lane::Right => 0,
            Lane::Left => 1,
        }
    }

    pub fn other(self) -> Lane {
        match self {
            Lane::Right => Lane::Left,
            Lane::Left => Lane::Right,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DrivingAction {
    HardAccel,
    MildAccel,
    Maintain,
    MildDecel,
    HardDecel,
    LaneSwitch,
    Stop,
}

impl DrivingAction {
    pub const ALL: [DrivingAction; 7] = [
        DrivingAction::HardAccel,
        DrivingAction::MildAccel,
        DrivingAction::Maintain,
        DrivingAction::MildDecel,
        DrivingAction::HardDecel,
        DrivingAction::LaneSwitch,
        DrivingAction::Stop,
    ];

    /// Nominal longitudinal acceleration for the speed-change actions.
    pub fn nominal_accel(self) -> Option<f64> {
        match self {
            DrivingAction::HardAccel => Some(4.0),
            DrivingAction::MildAccel => Some(1.5),
            DrivingAction::Maintain => Some(0.0),
            DrivingAction::MildDecel => Some(-1.5),
            DrivingAction::HardDecel => Some(-4.0),
            DrivingAction::LaneSwitch | DrivingAction::Stop => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: usize,
    pub x_m: f64,
    /// Lateral position; right lane centre is 0, left lane centre is the lane width.
    pub y_m: f64,
    /// Lane whose centre is nearest to `y_m`.
    pub lane: Lane,
    pub v_x_mps: f64,
    pub a_x_mps2: f64,
    /// Lateral speed magnitude; direction is toward `lane_target`.
    pub v_y_mps: f64,
    pub lane_target: Option<Lane>,
    pub target_speed_mps: Option<f64>,
    /// Set by the stop action; speed is zeroed at the end of the step.
    pub stopping: bool,
    pub serving_bs: Option<usize>,
    pub collided: bool,
    /// Steps left before a collided vehicle re-enters traffic.
    pub downtime: usize,
}

impl VehicleState {
    pub fn is_active(&self) -> bool {
        self.downtime == 0
    }

    pub fn is_switching(&self) -> bool {
        self.lane_target.is_some()
    }
}

/// Gap and relative speed to one neighbour. Negative `rel_v` means the two
/// vehicles are closing in on each other.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: Option<usize>,
    pub gap_m: f64,
    pub rel_v_mps: f64,
}

impl Neighbor {
    pub const NONE: Neighbor = Neighbor {
        id: None,
        gap_m: f64::INFINITY,
        rel_v_mps: 0.0,
    };
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbors {
    pub front_current: Neighbor,
    pub front_adjacent: Neighbor,
    pub rear_adjacent: Neighbor,
}

/// One line of the per-step vehicle trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub id: usize,
    pub x: f64,
    pub lane: usize,
    pub v_x: f64,
    pub a_x: f64,
    pub serving_bs: Option<usize>,
}

impl TraceRecord {
    pub const HEADER: &'static str = "t,id,x,lane,v_x,a_x,serving_bs";

    pub fn to_csv_line(&self) -> String {
        let bs = self.serving_bs.map(|b| b.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{}",
            self.t, self.id, self.x, self.lane, self.v_x, self.a_x, bs
        )
    }
}

#[derive(Debug, Clone)]
pub struct World {
    pub config: RoadConfig,
    pub stations: Vec<BaseStation>,
    pub vehicles: Vec<VehicleState>,
    pub t: usize,
}

fn lane_center(config: &RoadConfig, lane: Lane) -> f64 {
    lane.index() as f64 * config.lane_width_m
}

/// Forward arc from `from` to `to` on a ring of length `len`, in `[0, len)`.
pub fn forward_arc(from: f64, to: f64, len: f64) -> f64 {
    let d = (to - from).rem_euclid(len);
    if d >= len {
        0.0
    } else {
        d
    }
}

/// Shortest signed longitudinal separation on the ring.
pub fn ring_delta(from: f64, to: f64, len: f64) -> f64 {
    let d = forward_arc(from, to, len);
    if d > len / 2.0 {
        d - len
    } else {
        d
    }
}

fn wrap(x: f64, len: f64) -> f64 {
    let w = x.rem_euclid(len);
    if w >= len {
        0.0
    } else {
        w
    }
}

/// Places base stations and vehicles on a fresh corridor.
pub fn deploy<R: Rng + ?Sized>(config: RoadConfig, rng: &mut R) -> Result<World> {
    config.validate()?;
    let len = config.corridor_len_m;
    let mut stations = Vec::with_capacity(config.n_rbs + config.n_tbs);
    for (kind, n, spec) in [
        (BsKind::Rbs, config.n_rbs, config.rbs),
        (BsKind::Tbs, config.n_tbs, config.tbs),
    ] {
        let spacing = len / n.max(1) as f64;
        for i in 0..n {
            let frac = match config.bs_layout {
                BsLayout::Uniform => 0.5,
                BsLayout::Random => rng.gen::<f64>(),
            };
            stations.push(BaseStation {
                id: stations.len(),
                kind,
                x_m: spacing * (i as f64 + frac),
                y_m: -config.bs_lateral_offset_m,
                bandwidth_hz: spec.bandwidth_hz,
                quota: spec.quota,
                current_load: 0,
            });
        }
    }

    let m = config.num_avs;
    let lanes = if len / m as f64 >= config.d_max_safety_m {
        1
    } else if 2.0 * len / m as f64 >= config.d_max_safety_m {
        2
    } else {
        return Err(Error::invalid(format!(
            "{m} vehicles do not fit on a {len} m corridor with spawn gap {}",
            config.d_max_safety_m
        )));
    };
    let per_lane = m.div_ceil(lanes);
    let spacing = len / per_lane as f64;
    let offset = rng.gen::<f64>() * spacing;
    let vehicles = (0..m)
        .map(|id| {
            let (lane, slot) = if lanes == 1 {
                (Lane::Right, id)
            } else if id % 2 == 0 {
                (Lane::Right, id / 2)
            } else {
                (Lane::Left, id / 2)
            };
            // stagger the left lane by half a slot
            let stagger = if lane == Lane::Left {
                spacing / 2.0
            } else {
                0.0
            };
            VehicleState {
                id,
                x_m: wrap(offset + stagger + slot as f64 * spacing, len),
                y_m: lane_center(&config, lane),
                lane,
                v_x_mps: config.v_desired_mps,
                a_x_mps2: 0.0,
                v_y_mps: 0.0,
                lane_target: None,
                target_speed_mps: None,
                stopping: false,
                serving_bs: None,
                collided: false,
                downtime: 0,
            }
        })
        .collect();

    Ok(World {
        config,
        stations,
        vehicles,
        t: 0,
    })
}

/// Sets the vehicle's commanded motion for the coming step.
pub fn apply_driving_action(
    v: &VehicleState,
    action: DrivingAction,
    config: &RoadConfig,
) -> VehicleState {
    let mut next = v.clone();
    next.stopping = false;
    match action {
        DrivingAction::Stop => {
            next.a_x_mps2 = -0.85 * v.v_x_mps / config.dt_s;
            next.target_speed_mps = None;
            next.stopping = true;
            next.v_y_mps = 0.0;
            next.lane_target = None;
        }
        DrivingAction::LaneSwitch if v.is_switching() => {
            debug!(
                "vehicle {} asked to switch lanes mid-switch; maintaining",
                v.id
            );
            next.a_x_mps2 = 0.0;
            next.target_speed_mps = None;
        }
        DrivingAction::LaneSwitch => {
            next.a_x_mps2 = 0.0;
            next.target_speed_mps = None;
            next.v_y_mps = config.lane_switch_speed_mps;
            next.lane_target = Some(v.lane.other());
        }
        DrivingAction::Maintain => {
            next.a_x_mps2 = 0.0;
            next.target_speed_mps = None;
        }
        speed_change => {
            let a = speed_change.nominal_accel().unwrap_or(0.0);
            let target = (v.v_x_mps + a.signum() * config.v_at_mps).clamp(0.0, config.v_max_mps);
            next.target_speed_mps = Some(target);
            next.a_x_mps2 = if (target - v.v_x_mps).abs() < a.abs() * config.dt_s {
                (target - v.v_x_mps) / config.dt_s
            } else {
                a
            };
        }
    }
    next
}

/// Advances every active vehicle by one Euler step of length `dt`.
pub fn step_kinematics(world: &mut World, dt: f64) {
    let cfg = world.config.clone();
    let len = cfg.corridor_len_m;
    for v in world.vehicles.iter_mut().filter(|v| v.is_active()) {
        v.x_m = wrap(v.x_m + v.v_x_mps * dt + 0.5 * v.a_x_mps2 * dt * dt, len);
        let mut speed = (v.v_x_mps + v.a_x_mps2 * dt).max(0.0);
        if let Some(target) = v.target_speed_mps {
            let crossed =
                (v.a_x_mps2 >= 0.0 && speed >= target) || (v.a_x_mps2 <= 0.0 && speed <= target);
            if crossed {
                speed = target;
                v.a_x_mps2 = 0.0;
                v.target_speed_mps = None;
            }
        }
        if v.stopping {
            speed = 0.0;
            v.stopping = false;
        }
        v.v_x_mps = speed.min(cfg.v_max_mps);

        // An interrupted switch settles back onto the nearest lane centre.
        if v.lane_target.is_none() && (v.y_m - lane_center(&cfg, v.lane)).abs() > 1e-9 {
            v.lane_target = Some(v.lane);
            v.v_y_mps = cfg.lane_switch_speed_mps;
        }
        if let Some(target) = v.lane_target {
            if v.v_y_mps > 0.0 {
                let goal = lane_center(&cfg, target);
                let step = v.v_y_mps * dt;
                if (goal - v.y_m).abs() <= step {
                    v.y_m = goal;
                    v.v_y_mps = 0.0;
                    v.lane_target = None;
                } else {
                    v.y_m += step * (goal - v.y_m).signum();
                }
            }
        }
        v.lane = if v.y_m > cfg.lane_width_m / 2.0 {
            Lane::Left
        } else {
            Lane::Right
        };
    }
    world.t += 1;
}

/// Nearest vehicles ahead in the own lane and ahead/behind in the other lane.
pub fn neighbors(world: &World, av_id: usize) -> Neighbors {
    let me = &world.vehicles[av_id];
    let len = world.config.corridor_len_m;
    let mut out = Neighbors {
        front_current: Neighbor::NONE,
        front_adjacent: Neighbor::NONE,
        rear_adjacent: Neighbor::NONE,
    };
    for other in world
        .vehicles
        .iter()
        .filter(|o| o.id != me.id && o.is_active())
    {
        let ahead = forward_arc(me.x_m, other.x_m, len);
        let behind = forward_arc(other.x_m, me.x_m, len);
        if other.lane == me.lane {
            if ahead < out.front_current.gap_m {
                out.front_current = Neighbor {
                    id: Some(other.id),
                    gap_m: ahead,
                    rel_v_mps: other.v_x_mps - me.v_x_mps,
                };
            }
        } else {
            if ahead < out.front_adjacent.gap_m {
                out.front_adjacent = Neighbor {
                    id: Some(other.id),
                    gap_m: ahead,
                    rel_v_mps: other.v_x_mps - me.v_x_mps,
                };
            }
            if behind < out.rear_adjacent.gap_m {
                out.rear_adjacent = Neighbor {
                    id: Some(other.id),
                    gap_m: behind,
                    rel_v_mps: me.v_x_mps - other.v_x_mps,
                };
            }
        }
    }
    out
}

/// Whether two vehicle footprints overlap.
pub fn overlapping(config: &RoadConfig, a: &VehicleState, b: &VehicleState) -> bool {
    let dx = ring_delta(a.x_m, b.x_m, config.corridor_len_m).abs();
    let dy = (a.y_m - b.y_m).abs();
    dx <= config.vehicle_length_m && dy < config.lateral_envelope_m
}

/// Flags every active vehicle involved in an overlap and returns the pairs.
pub fn detect_collisions(world: &mut World) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    let n = world.vehicles.len();
    for i in 0..n {
        if !world.vehicles[i].is_active() {
            continue;
        }
        for j in i + 1..n {
            if world.vehicles[j].is_active()
                && overlapping(&world.config, &world.vehicles[i], &world.vehicles[j])
            {
                pairs.push((i, j));
            }
        }
    }
    for &(i, j) in &pairs {
        world.vehicles[i].collided = true;
        world.vehicles[j].collided = true;
    }
    pairs
}

impl World {
    /// Takes a collided vehicle out of traffic: forced stop, link released.
    pub fn retire(&mut self, id: usize) {
        let delay = self.config.respawn_delay_steps.max(1);
        let dt = self.config.dt_s;
        let v = &mut self.vehicles[id];
        v.a_x_mps2 = -0.85 * v.v_x_mps / dt;
        v.v_x_mps = 0.0;
        v.v_y_mps = 0.0;
        v.lane_target = None;
        v.target_speed_mps = None;
        v.stopping = false;
        v.serving_bs = None;
        v.downtime = delay;
    }

    /// Counts down downtime and puts vehicles whose downtime expired back on
    /// the road. Returns the ids that re-entered.
    pub fn tick_downtime(&mut self) -> Vec<usize> {
        let mut back = Vec::new();
        for id in 0..self.vehicles.len() {
            if self.vehicles[id].downtime > 0 {
                self.vehicles[id].downtime -= 1;
                if self.vehicles[id].downtime == 0 {
                    self.respawn(id);
                    back.push(id);
                }
            }
        }
        back
    }

    /// Re-inserts a vehicle in the middle of the widest gap, right lane on ties.
    pub fn respawn(&mut self, id: usize) {
        let len = self.config.corridor_len_m;
        let mut best = (Lane::Right, 0.0, f64::NEG_INFINITY);
        for lane in [Lane::Right, Lane::Left] {
            let mut xs: Vec<f64> = self
                .vehicles
                .iter()
                .filter(|v| v.id != id && v.is_active() && v.lane == lane)
                .map(|v| v.x_m)
                .collect();
            xs.sort_by(f64::total_cmp);
            let (x, gap) = if xs.is_empty() {
                (0.0, len)
            } else {
                let mut widest = (xs[0], 0.0);
                for (k, &x) in xs.iter().enumerate() {
                    let next = xs[(k + 1) % xs.len()];
                    let g = if xs.len() == 1 {
                        len
                    } else {
                        forward_arc(x, next, len)
                    };
                    if g > widest.1 {
                        widest = (x, g);
                    }
                }
                (wrap(widest.0 + widest.1 / 2.0, len), widest.1)
            };
            if gap > best.2 {
                best = (lane, x, gap);
            }
        }
        let cfg = &self.config;
        let v = &mut self.vehicles[id];
        v.x_m = best.1;
        v.lane = best.0;
        v.y_m = lane_center(cfg, best.0);
        v.v_x_mps = cfg.v_desired_mps;
        v.a_x_mps2 = 0.0;
        v.v_y_mps = 0.0;
        v.lane_target = None;
        v.target_speed_mps = None;
        v.stopping = false;
        v.collided = false;
        v.downtime = 0;
    }

    /// Straight-line distance from a vehicle to a station, using the shortest
    /// longitudinal arc on the ring.
    pub fn distance(&self, av: usize, bs: usize) -> f64 {
        let v = &self.vehicles[av];
        let s = &self.stations[bs];
        let dx = ring_delta(v.x_m, s.x_m, self.config.corridor_len_m);
        let dy = v.y_m - s.y_m;
        (dx * dx + dy * dy).sqrt()
    }

    pub fn trace(&self) -> impl Iterator<Item = TraceRecord> + '_ {
        self.vehicles.iter().map(move |v| TraceRecord {
            t: self.t,
            id: v.id,
            x: v.x_m,
            lane: v.lane.index(),
            v_x: v.v_x_mps,
            a_x: v.a_x_mps2,
            serving_bs: v.serving_bs,
        })
    }
}

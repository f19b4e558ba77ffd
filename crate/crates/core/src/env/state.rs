//! Observations, their discretisation, and the joint action space.

use serde::{Deserialize, Serialize};

use crate::road::{DrivingAction, Lane, Neighbors};

/// Raw per-AV observation. Missing neighbours carry an infinite gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub d_fc: f64,
    pub d_ft: f64,
    pub d_rt: f64,
    pub v_fc: f64,
    pub v_ft: f64,
    pub v_rt: f64,
    /// Number of top-three stations whose rate meets the AV's requirement.
    pub c_count: usize,
    pub lane: Lane,
}

impl Observation {
    pub fn new(n: &Neighbors, c_count: usize, lane: Lane) -> Self {
        Self {
            d_fc: n.front_current.gap_m,
            d_ft: n.front_adjacent.gap_m,
            d_rt: n.rear_adjacent.gap_m,
            v_fc: n.front_current.rel_v_mps,
            v_ft: n.front_adjacent.rel_v_mps,
            v_rt: n.rear_adjacent.rel_v_mps,
            c_count,
            lane,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DistanceBin {
    Close,
    Mid,
    Far,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VelocityBin {
    Approaching,
    Equal,
    Separating,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConnectivityBin {
    /// Zero or one station meets the rate requirement.
    AtMostOne,
    Two,
    Three,
}

/// Thresholds used to bin observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    pub d_close_m: f64,
    pub d_far_m: f64,
    /// Relative speeds with magnitude below this count as equal.
    pub v_eps_mps: f64,
}

impl Discretizer {
    pub fn distance(&self, d: f64) -> DistanceBin {
        if d <= self.d_close_m {
            DistanceBin::Close
        } else if d <= self.d_far_m {
            DistanceBin::Mid
        } else {
            DistanceBin::Far
        }
    }

    pub fn velocity(&self, v: f64) -> VelocityBin {
        if v.abs() < self.v_eps_mps {
            VelocityBin::Equal
        } else if v < 0.0 {
            VelocityBin::Approaching
        } else {
            VelocityBin::Separating
        }
    }

    pub fn connectivity(c: usize) -> ConnectivityBin {
        match c {
            0 | 1 => ConnectivityBin::AtMostOne,
            2 => ConnectivityBin::Two,
            _ => ConnectivityBin::Three,
        }
    }

    pub fn discretize(&self, obs: &Observation) -> DiscreteState {
        DiscreteState {
            d_fc: self.distance(obs.d_fc),
            d_ft: self.distance(obs.d_ft),
            d_rt: self.distance(obs.d_rt),
            v_fc: self.velocity(obs.v_fc),
            v_ft: self.velocity(obs.v_ft),
            v_rt: self.velocity(obs.v_rt),
            conn: Self::connectivity(obs.c_count),
            lane: obs.lane,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DiscreteState {
    pub d_fc: DistanceBin,
    pub d_ft: DistanceBin,
    pub d_rt: DistanceBin,
    pub v_fc: VelocityBin,
    pub v_ft: VelocityBin,
    pub v_rt: VelocityBin,
    pub conn: ConnectivityBin,
    pub lane: Lane,
}

const DIST: [DistanceBin; 3] = [DistanceBin::Close, DistanceBin::Mid, DistanceBin::Far];
const VEL: [VelocityBin; 3] = [
    VelocityBin::Approaching,
    VelocityBin::Equal,
    VelocityBin::Separating,
];
const CONN: [ConnectivityBin; 3] = [
    ConnectivityBin::AtMostOne,
    ConnectivityBin::Two,
    ConnectivityBin::Three,
];

impl DiscreteState {
    /// 3^7 * 2.
    pub const COUNT: usize = 4374;

    fn trits(&self) -> [usize; 7] {
        [
            self.d_fc as usize,
            self.d_ft as usize,
            self.d_rt as usize,
            self.v_fc as usize,
            self.v_ft as usize,
            self.v_rt as usize,
            self.conn as usize,
        ]
    }

    /// Mixed-radix index, most significant component first.
    pub fn index(&self) -> usize {
        let t = self.trits().iter().fold(0, |acc, &t| acc * 3 + t);
        t * 2 + self.lane.index()
    }

    pub fn from_index(index: usize) -> Option<Self> {
        if index >= Self::COUNT {
            return None;
        }
        let lane = if index.is_multiple_of(2) {
            Lane::Right
        } else {
            Lane::Left
        };
        let mut rest = index / 2;
        let mut t = [0usize; 7];
        for slot in t.iter_mut().rev() {
            *slot = rest % 3;
            rest /= 3;
        }
        Some(Self {
            d_fc: DIST[t[0]],
            d_ft: DIST[t[1]],
            d_rt: DIST[t[2]],
            v_fc: VEL[t[3]],
            v_ft: VEL[t[4]],
            v_rt: VEL[t[5]],
            conn: CONN[t[6]],
            lane,
        })
    }

    /// Centred numeric code per component: trits map to -1/0/1, lane to 0/1.
    pub fn encode_numeric(&self, out: &mut [f64]) {
        for (o, t) in out.iter_mut().zip(self.trits()) {
            *o = t as f64 - 1.0;
        }
        out[7] = self.lane.index() as f64;
    }

    /// One-hot per trit component plus a two-way lane indicator.
    pub fn encode_one_hot(&self, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (k, t) in self.trits().into_iter().enumerate() {
            out[3 * k + t] = 1.0;
        }
        out[21 + self.lane.index()] = 1.0;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateEncoding {
    #[default]
    Numeric,
    OneHot,
}

impl StateEncoding {
    pub fn width(self) -> usize {
        match self {
            StateEncoding::Numeric => 8,
            StateEncoding::OneHot => 23,
        }
    }

    pub fn encode(self, state: &DiscreteState, out: &mut [f64]) {
        match self {
            StateEncoding::Numeric => state.encode_numeric(out),
            StateEncoding::OneHot => state.encode_one_hot(out),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TelecomAction {
    HandoffAware,
    NoHandoffPenalty,
    MaxRate,
}

impl TelecomAction {
    pub const ALL: [TelecomAction; 3] = [
        TelecomAction::HandoffAware,
        TelecomAction::NoHandoffPenalty,
        TelecomAction::MaxRate,
    ];
}

/// One driving action paired with one network-selection action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ActionPair {
    pub driving: DrivingAction,
    pub telecom: TelecomAction,
}

impl ActionPair {
    pub const COUNT: usize = 21;

    pub fn index(&self) -> usize {
        let d = DrivingAction::ALL
            .iter()
            .position(|&a| a == self.driving)
            .unwrap_or(0);
        let t = TelecomAction::ALL
            .iter()
            .position(|&a| a == self.telecom)
            .unwrap_or(0);
        d * 3 + t
    }

    pub fn from_index(index: usize) -> Option<Self> {
        (index < Self::COUNT).then(|| Self {
            driving: DrivingAction::ALL[index / 3],
            telecom: TelecomAction::ALL[index % 3],
        })
    }
}

//! Flat `key = value` scenario configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::dqn::{DqnConfig, LossMode};
use crate::agent::tabular::LearnConfig;
use crate::agent::{EpsilonSchedule, Sharing};
use crate::channel::{self, InterferenceMode, RfParams, ThzParams};
use crate::env::reward::RewardWeights;
use crate::env::state::StateEncoding;
use crate::env::{EnvConfig, FadingMode, NOISE_TEMPERATURE_K};
use crate::error::{Error, Result};
use crate::road::{BsLayout, RoadConfig, StationSpec};

/// Prefix of environment variables that override config keys, e.g.
/// `VNETSIM_N_TBS=25`.
pub const ENV_PREFIX: &str = "VNETSIM_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Tabular,
    Dqn,
    NearestBs,
    MaxRate,
    NoHandoffPenalty,
}

impl AgentKind {
    pub const ALL: [AgentKind; 5] = [
        AgentKind::Tabular,
        AgentKind::Dqn,
        AgentKind::NearestBs,
        AgentKind::MaxRate,
        AgentKind::NoHandoffPenalty,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Tabular => "tabular",
            AgentKind::Dqn => "dqn",
            AgentKind::NearestBs => "nearest_bs",
            AgentKind::MaxRate => "max_rate",
            AgentKind::NoHandoffPenalty => "no_handoff_penalty",
        }
    }

    pub fn learns(self) -> bool {
        matches!(self, AgentKind::Tabular | AgentKind::Dqn)
    }
}

impl std::str::FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown agent `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    DesiredVelocity,
    NTbs,
    NAvs,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::DesiredVelocity, Axis::NTbs, Axis::NAvs];

    pub fn as_str(self) -> &'static str {
        match self {
            Axis::DesiredVelocity => "desired_velocity",
            Axis::NTbs => "n_tbs",
            Axis::NAvs => "n_avs",
        }
    }

    /// Writes `value` into the matching field of `cfg`.
    pub fn apply(self, cfg: &mut ScenarioConfig, value: f64) -> Result<()> {
        let count = || -> Result<usize> {
            if value >= 0.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::Config(format!(
                    "{} needs a whole number, got {value}",
                    self.as_str()
                )))
            }
        };
        match self {
            Axis::DesiredVelocity => cfg.v_desired_mps = value,
            Axis::NTbs => cfg.n_tbs = count()?,
            Axis::NAvs => cfg.num_avs = count()?,
        }
        Ok(())
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown axis `{s}`")))
    }
}

/// Every tunable of a run. Unset keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    // corridor
    pub corridor_len_m: f64,
    pub lane_width_m: f64,
    pub vehicle_length_m: f64,
    pub lateral_envelope_m: f64,
    pub dt_s: f64,
    pub n_rbs: usize,
    pub n_tbs: usize,
    pub bs_layout: BsLayout,
    pub bs_lateral_offset_m: f64,
    pub d_min_safety_m: f64,
    pub d_max_safety_m: f64,
    pub v_desired_mps: f64,
    pub v_at_mps: f64,
    pub v_max_mps: f64,
    pub lane_switch_speed_mps: f64,
    pub num_avs: usize,
    pub respawn_delay_steps: usize,

    // stations
    pub rbs_bandwidth_hz: f64,
    pub rbs_quota: usize,
    pub tbs_bandwidth_hz: f64,
    pub tbs_quota: usize,

    // RF tier
    pub rf_tx_power_w: f64,
    pub rf_tx_gain: f64,
    pub rf_rx_gain: f64,
    pub rf_carrier_hz: f64,
    pub pathloss_exp: f64,
    /// Defaults to thermal noise over the RBS bandwidth.
    pub rf_noise_w: Option<f64>,

    // THz tier
    pub thz_tx_power_w: f64,
    pub thz_main_gain: f64,
    pub thz_side_gain: f64,
    pub thz_carrier_hz: f64,
    pub absorption_per_m: f64,
    /// Defaults to thermal noise over the TBS bandwidth.
    pub thz_noise_w: Option<f64>,
    /// Main-lobe alignment probability on each side; the beamwidth is
    /// `2 pi` times this value.
    pub align_prob: f64,
    pub interference: InterferenceMode,
    pub fading: FadingMode,

    // rewards and state
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
    pub w5: f64,
    pub w6: f64,
    pub rate_threshold_bps: f64,
    pub v_eps_mps: f64,
    pub encoding: StateEncoding,

    // learning
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay: f64,
    pub episodes: usize,
    pub horizon: usize,
    pub eval_episodes: usize,
    pub sharing: Sharing,

    // deep Q-learning
    pub dqn_hidden: Vec<usize>,
    pub dqn_learning_rate: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub target_sync_every: usize,
    pub train_every: usize,
    pub loss: LossMode,
    pub reward_scale: f64,
    pub grad_clip: f64,

    // sweep
    pub agent: AgentKind,
    pub axis: Axis,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
    pub base_seed: u64,
    pub out_dir: PathBuf,
    pub trace: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let road = RoadConfig::default();
        let env = EnvConfig::default();
        let learn = LearnConfig::default();
        let dqn = DqnConfig::default();
        let w = RewardWeights::default();
        Self {
            corridor_len_m: road.corridor_len_m,
            lane_width_m: road.lane_width_m,
            vehicle_length_m: road.vehicle_length_m,
            lateral_envelope_m: road.lateral_envelope_m,
            dt_s: road.dt_s,
            n_rbs: road.n_rbs,
            n_tbs: road.n_tbs,
            bs_layout: road.bs_layout,
            bs_lateral_offset_m: road.bs_lateral_offset_m,
            d_min_safety_m: road.d_min_safety_m,
            d_max_safety_m: road.d_max_safety_m,
            v_desired_mps: road.v_desired_mps,
            v_at_mps: road.v_at_mps,
            v_max_mps: road.v_max_mps,
            lane_switch_speed_mps: road.lane_switch_speed_mps,
            num_avs: road.num_avs,
            respawn_delay_steps: road.respawn_delay_steps,
            rbs_bandwidth_hz: road.rbs.bandwidth_hz,
            rbs_quota: road.rbs.quota,
            tbs_bandwidth_hz: road.tbs.bandwidth_hz,
            tbs_quota: road.tbs.quota,
            rf_tx_power_w: env.rf.tx_power_w,
            rf_tx_gain: env.rf.tx_gain,
            rf_rx_gain: env.rf.rx_gain,
            rf_carrier_hz: env.rf.carrier_hz,
            pathloss_exp: env.rf.pathloss_exp,
            rf_noise_w: None,
            thz_tx_power_w: env.thz.tx_power_w,
            thz_main_gain: env.thz.main_gain_tx,
            thz_side_gain: env.thz.side_gain_tx,
            thz_carrier_hz: env.thz.carrier_hz,
            absorption_per_m: env.thz.absorption_per_m,
            thz_noise_w: None,
            align_prob: env.thz.align_prob_tx,
            interference: env.interference,
            fading: env.fading,
            w1: w.w1,
            w2: w.w2,
            w3: w.w3,
            w4: w.w4,
            w5: w.w5,
            w6: w.w6,
            rate_threshold_bps: w.rate_threshold_bps,
            v_eps_mps: env.v_eps_mps,
            encoding: env.encoding,
            learning_rate: learn.learning_rate,
            discount: learn.discount,
            epsilon_start: learn.epsilon.start,
            epsilon_end: learn.epsilon.end,
            epsilon_decay: learn.epsilon.decay,
            episodes: 300,
            horizon: learn.horizon,
            eval_episodes: 10,
            sharing: learn.sharing,
            dqn_hidden: dqn.hidden,
            dqn_learning_rate: dqn.learning_rate,
            batch_size: dqn.batch_size,
            replay_capacity: dqn.replay_capacity,
            target_sync_every: dqn.target_sync_every,
            train_every: 16,
            loss: dqn.loss,
            reward_scale: 0.01,
            grad_clip: 0.0,
            agent: AgentKind::Tabular,
            axis: Axis::NTbs,
            values: vec![2.0, 5.0, 10.0, 20.0, 30.0],
            seeds: vec![1, 2, 3, 4, 5],
            base_seed: 0,
            out_dir: PathBuf::from("out"),
            trace: false,
        }
    }
}

impl ScenarioConfig {
    /// Parses config text. Unknown keys are rejected.
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_table(table)
    }

    fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| {
            let msg = e.to_string();
            match msg
                .split("unknown field `")
                .nth(1)
                .and_then(|rest| rest.split('`').next())
            {
                Some(key) => Error::UnknownKey(key.to_owned()),
                None => Error::Config(msg),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (or starts from defaults when `None`) and applies
    /// overrides from `vars`, typically [`std::env::vars`].
    pub fn load(
        path: Option<&Path>,
        vars: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?,
            None => String::new(),
        };
        let mut table: toml::Table =
            toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        for (name, raw) in vars {
            let Some(key) = name.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            table.insert(key.to_ascii_lowercase(), parse_value(&raw));
        }
        Self::from_table(table)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("axis values must not be empty".into()));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() || seeds.is_empty() {
            return Err(Error::Config("seeds must be non-empty and distinct".into()));
        }
        if !(0.0..=1.0).contains(&self.align_prob) {
            return Err(Error::Config("align_prob must lie in [0, 1]".into()));
        }
        self.env_config().validate()?;
        self.learn_config().validate()?;
        self.dqn_config().validate()?;
        Ok(())
    }

    pub fn road_config(&self) -> RoadConfig {
        RoadConfig {
            corridor_len_m: self.corridor_len_m,
            lane_width_m: self.lane_width_m,
            vehicle_length_m: self.vehicle_length_m,
            lateral_envelope_m: self.lateral_envelope_m,
            dt_s: self.dt_s,
            n_rbs: self.n_rbs,
            n_tbs: self.n_tbs,
            rbs: StationSpec {
                bandwidth_hz: self.rbs_bandwidth_hz,
                quota: self.rbs_quota,
            },
            tbs: StationSpec {
                bandwidth_hz: self.tbs_bandwidth_hz,
                quota: self.tbs_quota,
            },
            bs_layout: self.bs_layout,
            bs_lateral_offset_m: self.bs_lateral_offset_m,
            d_min_safety_m: self.d_min_safety_m,
            d_max_safety_m: self.d_max_safety_m,
            v_desired_mps: self.v_desired_mps,
            v_at_mps: self.v_at_mps,
            v_max_mps: self.v_max_mps,
            lane_switch_speed_mps: self.lane_switch_speed_mps,
            num_avs: self.num_avs,
            respawn_delay_steps: self.respawn_delay_steps,
        }
    }

    pub fn env_config(&self) -> EnvConfig {
        let beam = 2.0 * std::f64::consts::PI * self.align_prob;
        EnvConfig {
            road: self.road_config(),
            rf: RfParams {
                tx_power_w: self.rf_tx_power_w,
                tx_gain: self.rf_tx_gain,
                rx_gain: self.rf_rx_gain,
                carrier_hz: self.rf_carrier_hz,
                pathloss_exp: self.pathloss_exp,
                noise_w: self.rf_noise_w.unwrap_or_else(|| {
                    channel::thermal_noise_w(NOISE_TEMPERATURE_K, self.rbs_bandwidth_hz)
                }),
            },
            thz: ThzParams {
                tx_power_w: self.thz_tx_power_w,
                main_gain_tx: self.thz_main_gain,
                main_gain_rx: self.thz_main_gain,
                side_gain_tx: self.thz_side_gain,
                side_gain_rx: self.thz_side_gain,
                carrier_hz: self.thz_carrier_hz,
                absorption_per_m: self.absorption_per_m,
                thermal_noise_w: self.thz_noise_w.unwrap_or_else(|| {
                    channel::thermal_noise_w(NOISE_TEMPERATURE_K, self.tbs_bandwidth_hz)
                }),
                beamwidth_tx_rad: beam,
                beamwidth_rx_rad: beam,
                align_prob_tx: self.align_prob,
                align_prob_rx: self.align_prob,
            },
            interference: self.interference,
            fading: self.fading,
            rewards: RewardWeights {
                w1: self.w1,
                w2: self.w2,
                w3: self.w3,
                w4: self.w4,
                w5: self.w5,
                w6: self.w6,
                v_desired_mps: self.v_desired_mps,
                rate_threshold_bps: self.rate_threshold_bps,
            },
            v_eps_mps: self.v_eps_mps,
            encoding: self.encoding,
            selection: Default::default(),
        }
    }

    pub fn epsilon(&self) -> EpsilonSchedule {
        EpsilonSchedule {
            start: self.epsilon_start,
            end: self.epsilon_end,
            decay: self.epsilon_decay,
        }
    }

    pub fn learn_config(&self) -> LearnConfig {
        LearnConfig {
            learning_rate: self.learning_rate,
            discount: self.discount,
            epsilon: self.epsilon(),
            episodes: self.episodes,
            horizon: self.horizon,
            sharing: self.sharing,
        }
    }

    pub fn dqn_config(&self) -> DqnConfig {
        DqnConfig {
            hidden: self.dqn_hidden.clone(),
            learning_rate: self.dqn_learning_rate,
            discount: self.discount,
            epsilon: self.epsilon(),
            episodes: self.episodes,
            horizon: self.horizon,
            batch_size: self.batch_size,
            replay_capacity: self.replay_capacity,
            target_sync_every: self.target_sync_every,
            train_every: self.train_every,
            loss: self.loss,
            reward_scale: self.reward_scale,
            grad_clip: self.grad_clip,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    /// Short digest of the simulation and learning settings; sweep and
    /// output keys are left out so an artifact stays valid across sweeps.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.values.clear();
        c.seeds.clear();
        c.base_seed = 0;
        c.out_dir = PathBuf::new();
        c.trace = false;
        c.agent = AgentKind::Tabular;
        c.axis = Axis::NTbs;
        let digest = Sha256::digest(c.to_toml().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Interprets an override as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t
            .remove("v")
            .unwrap_or_else(|| toml::Value::String(raw.to_owned())),
        Err(_) => toml::Value::String(raw.to_owned()),
    }
}

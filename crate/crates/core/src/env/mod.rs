//! The multi-agent driving and network-selection MDP.

pub mod reward;
pub mod state;
pub mod telecom;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{AgentStep, Environment};
use crate::channel::{self, InterferenceMode, RfParams, ThzParams};
use crate::error::{Error, Result};
use crate::metrics::{EpisodeMetrics, MetricsAccumulator, StepSample};
use crate::road::{self, BsKind, TraceRecord, World};

use reward::{DrivingOutcome, RewardWeights};
use state::{ActionPair, DiscreteState, Discretizer, Observation, StateEncoding};
use telecom::{AssociationState, Selection, StationView};

/// Small-scale fading applied to RF links.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FadingMode {
    /// Unit-mean exponential power, redrawn per link and step.
    #[default]
    Rayleigh,
    /// `H = 1` on every link.
    Fixed,
}

/// How the serving station is chosen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    /// Follow the telecom half of each AV's joint action.
    #[default]
    Agent,
    /// Ignore the telecom action and attach to the nearest station with room.
    Nearest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub road: crate::road::RoadConfig,
    pub rf: RfParams,
    pub thz: ThzParams,
    pub interference: InterferenceMode,
    pub fading: FadingMode,
    /// `v_desired_mps` here is ignored; the road's desired speed is used.
    pub rewards: RewardWeights,
    pub v_eps_mps: f64,
    pub encoding: StateEncoding,
    pub selection: SelectionRule,
}

/// Thermal noise temperature used for the default noise floors.
pub const NOISE_TEMPERATURE_K: f64 = 290.0;

impl Default for EnvConfig {
    fn default() -> Self {
        let road = crate::road::RoadConfig::default();
        let rf = RfParams {
            tx_power_w: 1.0,
            tx_gain: 1.0,
            rx_gain: 1.0,
            carrier_hz: 3.5e9,
            pathloss_exp: 4.0,
            noise_w: channel::thermal_noise_w(NOISE_TEMPERATURE_K, road.rbs.bandwidth_hz),
        };
        let align = 0.1;
        let thz = ThzParams {
            tx_power_w: 1.0,
            main_gain_tx: 316.2,
            main_gain_rx: 316.2,
            side_gain_tx: 0.0,
            side_gain_rx: 0.0,
            carrier_hz: 1e12,
            absorption_per_m: 0.05,
            thermal_noise_w: channel::thermal_noise_w(NOISE_TEMPERATURE_K, road.tbs.bandwidth_hz),
            beamwidth_tx_rad: 2.0 * std::f64::consts::PI * align,
            beamwidth_rx_rad: 2.0 * std::f64::consts::PI * align,
            align_prob_tx: align,
            align_prob_rx: align,
        };
        Self {
            road,
            rf,
            thz,
            interference: InterferenceMode::Expected,
            fading: FadingMode::Rayleigh,
            rewards: RewardWeights::default(),
            v_eps_mps: 0.5,
            encoding: StateEncoding::Numeric,
            selection: SelectionRule::Agent,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.road.validate()?;
        self.rf.validate()?;
        self.thz.validate()?;
        if !(self.v_eps_mps >= 0.0) {
            return Err(Error::invalid("v_eps_mps must be non-negative"));
        }
        let w = &self.rewards;
        if ![w.w1, w.w2, w.w3, w.w4, w.w5, w.w6]
            .iter()
            .all(|x| x.is_finite())
            || !(w.w1 > 0.0)
        {
            return Err(Error::invalid("reward weights must be finite with w1 > 0"));
        }
        if w.rate_threshold_bps.is_nan() {
            return Err(Error::invalid("rate_threshold_bps must be a number"));
        }
        Ok(())
    }

    pub fn discretizer(&self) -> Discretizer {
        Discretizer {
            d_close_m: self.road.d_min_safety_m,
            d_far_m: self.road.d_max_safety_m,
            v_eps_mps: self.v_eps_mps,
        }
    }

    /// Reward weights with the desired speed taken from the road config.
    pub fn weights(&self) -> RewardWeights {
        RewardWeights {
            v_desired_mps: self.road.v_desired_mps,
            ..self.rewards
        }
    }
}

/// One acting AV in one step, as written to the per-step CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub episode: usize,
    pub t: usize,
    pub av_id: usize,
    pub state: usize,
    pub action: usize,
    pub r_tran: f64,
    pub r_tele: f64,
    pub t_ij: f64,
    pub t_q: f64,
    pub serving_bs: Option<usize>,
    pub handoff: bool,
    /// Cross-tier handoff; empty when no handoff happened.
    pub vertical: Option<bool>,
    pub collision: bool,
    pub handoff_prob: f64,
}

impl StepRecord {
    pub const HEADER: &'static str =
        "episode,t,av_id,state,action,r_tran,r_tele,t_ij,t_q,serving_bs,handoff,vertical,collision,handoff_prob";

    pub fn to_csv_line(&self) -> String {
        let opt = |o: Option<String>| o.unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.episode,
            self.t,
            self.av_id,
            self.state,
            self.action,
            self.r_tran,
            self.r_tele,
            self.t_ij,
            self.t_q,
            opt(self.serving_bs.map(|b| b.to_string())),
            u8::from(self.handoff),
            opt(self.vertical.map(|v| u8::from(v).to_string())),
            u8::from(self.collision),
            self.handoff_prob
        )
    }
}

/// Optional per-step output collected while stepping.
#[derive(Debug, Clone, Default)]
pub struct Recording {
    pub steps: Vec<StepRecord>,
    pub trace: Vec<TraceRecord>,
}

/// The simulator as an [`Environment`]. Each episode redeploys the corridor
/// from a random stream derived from `(seed, episode)`, so episodes can be
/// replayed independently of what ran before them.
#[derive(Debug, Clone)]
pub struct VnetEnv {
    cfg: EnvConfig,
    weights: RewardWeights,
    disc: Discretizer,
    seed: u64,
    episode: usize,
    world: World,
    rng: ChaCha8Rng,
    assoc: Vec<AssociationState>,
    /// `T_ij` of every AV to every station in the current step.
    rates: Vec<Vec<f64>>,
    states: Vec<DiscreteState>,
    acc: MetricsAccumulator,
    recording: Option<Recording>,
    scratch: Vec<f64>,
}

impl VnetEnv {
    pub fn new(cfg: EnvConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Fail early if the vehicles do not fit.
        let world = road::deploy(cfg.road.clone(), &mut rng)?;
        let m = cfg.road.num_avs;
        let mut env = Self {
            weights: cfg.weights(),
            disc: cfg.discretizer(),
            cfg,
            seed,
            episode: 0,
            world,
            rng,
            assoc: vec![AssociationState::default(); m],
            rates: vec![Vec::new(); m],
            states: Vec::with_capacity(m),
            acc: MetricsAccumulator::default(),
            recording: None,
            scratch: Vec::new(),
        };
        env.reset(0);
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn association(&self, av: usize) -> &AssociationState {
        &self.assoc[av]
    }

    /// Current `T_ij` from `av` to every station.
    pub fn rates(&self, av: usize) -> &[f64] {
        &self.rates[av]
    }

    pub fn state(&self, av: usize) -> DiscreteState {
        self.states[av]
    }

    /// Starts collecting [`StepRecord`]s and vehicle traces.
    pub fn start_recording(&mut self) {
        self.recording = Some(Recording::default());
    }

    pub fn take_recording(&mut self) -> Option<Recording> {
        self.recording.take()
    }

    fn draw_rates(&mut self) {
        let world = &self.world;
        let mut rbs = Vec::new();
        let mut tbs = Vec::new();
        for (j, s) in world.stations.iter().enumerate() {
            match s.kind {
                BsKind::Rbs => rbs.push(j),
                BsKind::Tbs => tbs.push(j),
            }
        }
        let n = world.stations.len();
        for av in 0..world.vehicles.len() {
            let rates = &mut self.rates[av];
            rates.clear();
            rates.resize(n, 0.0);
            if !world.vehicles[av].is_active() {
                continue;
            }
            let dists: Vec<f64> = rbs.iter().map(|&j| world.distance(av, j)).collect();
            let fades: Vec<f64> = match self.cfg.fading {
                FadingMode::Rayleigh => dists
                    .iter()
                    .map(|_| channel::sample_fading(&mut self.rng))
                    .collect(),
                FadingMode::Fixed => vec![1.0; dists.len()],
            };
            channel::rf_sinr_all(&self.cfg.rf, &dists, &fades, &mut self.scratch);
            for (k, &j) in rbs.iter().enumerate() {
                rates[j] = channel::link_rate(world.stations[j].bandwidth_hz, self.scratch[k]);
            }

            let dists: Vec<f64> = tbs.iter().map(|&j| world.distance(av, j)).collect();
            let align: Option<Vec<f64>> = match self.cfg.interference {
                InterferenceMode::Expected => None,
                InterferenceMode::Sampled => Some(
                    tbs.iter()
                        .map(|_| channel::sample_alignment(&self.cfg.thz, &mut self.rng))
                        .collect(),
                ),
            };
            channel::thz_sinr_all(&self.cfg.thz, &dists, align.as_deref(), &mut self.scratch);
            for (k, &j) in tbs.iter().enumerate() {
                rates[j] = channel::link_rate(world.stations[j].bandwidth_hz, self.scratch[k]);
            }
        }
    }

    /// Ranks stations for every active AV and refreshes candidate loads.
    fn rank_all(&mut self) {
        for s in &mut self.world.stations {
            s.current_load = 0;
        }
        for av in 0..self.world.vehicles.len() {
            let a = &mut self.assoc[av];
            a.top3.clear();
            if !self.world.vehicles[av].is_active() {
                continue;
            }
            for j in telecom::rank_bs(&self.rates[av]) {
                a.top3.push((j, self.rates[av][j]));
                self.world.stations[j].current_load += 1;
            }
        }
    }

    fn observe(&self, av: usize) -> DiscreteState {
        let v = &self.world.vehicles[av];
        let c = self.assoc[av]
            .top3
            .iter()
            .filter(|&&(_, r)| r >= self.weights.rate_threshold_bps)
            .count();
        let obs = Observation::new(&road::neighbors(&self.world, av), c, v.lane);
        self.disc.discretize(&obs)
    }

    fn refresh_states(&mut self) {
        let states: Vec<DiscreteState> = (0..self.world.vehicles.len())
            .map(|av| self.observe(av))
            .collect();
        self.states = states;
    }
}

impl Environment for VnetEnv {
    fn state_count(&self) -> usize {
        DiscreteState::COUNT
    }

    fn action_count(&self) -> usize {
        ActionPair::COUNT
    }

    fn agent_count(&self) -> usize {
        self.cfg.road.num_avs
    }

    fn feature_len(&self) -> usize {
        self.cfg.encoding.width()
    }

    fn encode(&self, state: usize, out: &mut [f64]) {
        if let Some(s) = DiscreteState::from_index(state) {
            self.cfg.encoding.encode(&s, out);
        }
    }

    fn reset(&mut self, episode: usize) {
        self.episode = episode;
        self.rng = ChaCha8Rng::seed_from_u64(self.seed);
        self.rng.set_stream(episode as u64);
        self.world =
            road::deploy(self.cfg.road.clone(), &mut self.rng).expect("validated at construction");
        self.assoc
            .iter_mut()
            .for_each(|a| *a = AssociationState::default());
        self.acc = MetricsAccumulator::default();
        self.draw_rates();
        self.rank_all();
        self.refresh_states();
    }

    fn pending(&self) -> Vec<(usize, usize)> {
        self.world
            .vehicles
            .iter()
            .filter(|v| v.is_active())
            .map(|v| (v.id, self.states[v.id].index()))
            .collect()
    }

    fn step(&mut self, actions: &[(usize, usize)]) -> Result<Vec<AgentStep>> {
        let m = self.world.vehicles.len();
        let mut chosen: Vec<Option<ActionPair>> = vec![None; m];
        for &(agent, a) in actions {
            let pair = ActionPair::from_index(a)
                .ok_or_else(|| Error::Contract(format!("joint action {a} out of range")))?;
            match self.world.vehicles.get(agent) {
                Some(v) if v.is_active() => {}
                _ => return Err(Error::Contract(format!("agent {agent} cannot act now"))),
            }
            if chosen[agent].replace(pair).is_some() {
                return Err(Error::Contract(format!("agent {agent} acted twice")));
            }
        }
        let prior: Vec<DiscreteState> = self.states.clone();

        for (av, pair) in chosen.iter().enumerate() {
            if let Some(pair) = pair {
                let v = &self.world.vehicles[av];
                self.world.vehicles[av] =
                    road::apply_driving_action(v, pair.driving, &self.cfg.road);
            }
        }
        let dt = self.cfg.road.dt_s;
        road::step_kinematics(&mut self.world, dt);
        road::detect_collisions(&mut self.world);
        for id in self.world.tick_downtime() {
            self.assoc[id].detach();
        }

        self.draw_rates();
        self.rank_all();

        let mut views: Vec<StationView> = self
            .world
            .stations
            .iter()
            .map(|s| StationView {
                kind: s.kind,
                quota: s.quota,
                candidate_load: s.current_load,
                associated: 0,
            })
            .collect();
        let mut selections = vec![Selection::NONE; m];
        for av in 0..m {
            let Some(pair) = chosen[av] else { continue };
            let prev = self.assoc[av].current_bs;
            let sel = match self.cfg.selection {
                SelectionRule::Agent => {
                    let top3: Vec<usize> = self.assoc[av].top3.iter().map(|&(j, _)| j).collect();
                    telecom::select_bs(prev, pair.telecom, &top3, &self.rates[av], &views)
                }
                SelectionRule::Nearest => {
                    let order = telecom::nearest_order(&self.world, av);
                    telecom::associate_in_order(prev, &order, &self.rates[av], &views)
                }
            };
            if let Some(j) = sel.bs {
                views[j].associated += 1;
            }
            self.assoc[av].record(&sel, true);
            self.world.vehicles[av].serving_bs = sel.bs;
            selections[av] = sel;
        }
        self.acc.quota_violations += views.iter().filter(|v| v.associated > v.quota).count();

        self.refresh_states();

        let mut out = Vec::with_capacity(actions.len());
        for av in 0..m {
            let Some(pair) = chosen[av] else { continue };
            let v = &self.world.vehicles[av];
            let front = road::neighbors(&self.world, av).front_current.gap_m;
            let outcome = DrivingOutcome {
                collided: v.collided,
                v_x_mps: v.v_x_mps,
                front_gap_m: front,
                action: pair.driving,
                lane: v.lane,
            };
            let sel = selections[av];
            let k = self.assoc[av].handoff_prob();
            let r_tran = reward::reward_tran(&outcome, &self.weights, &self.disc);
            let r_tele = reward::reward_tele(sel.weighted, k, &self.weights);
            if sel.weighted > sel.rate * (1.0 + 1e-12) || sel.weighted < 0.0 {
                self.acc.rate_violations += 1;
            }
            if !(0.0..=1.0).contains(&k) {
                self.acc.k_violations += 1;
            }
            self.acc.push(&StepSample {
                r_tran,
                r_tele,
                rate_tq: sel.weighted,
                rate_tij: sel.rate,
                handoff: sel.handoff,
                collision: v.collided,
                velocity: v.v_x_mps,
            });
            out.push(AgentStep {
                agent: av,
                state: prior[av].index(),
                action: pair.index(),
                reward: r_tran + r_tele,
                next_state: self.states[av].index(),
                terminal: v.collided,
            });
            if let Some(rec) = self.recording.as_mut() {
                let prev_kind = self.assoc[av]
                    .previous_bs
                    .map(|p| self.world.stations[p].kind);
                let new_kind = sel.bs.map(|j| self.world.stations[j].kind);
                rec.steps.push(StepRecord {
                    episode: self.episode,
                    t: self.world.t,
                    av_id: av,
                    state: prior[av].index(),
                    action: pair.index(),
                    r_tran,
                    r_tele,
                    t_ij: sel.rate,
                    t_q: sel.weighted,
                    serving_bs: sel.bs,
                    handoff: sel.handoff,
                    vertical: sel.handoff.then(|| prev_kind != new_kind),
                    collision: v.collided,
                    handoff_prob: k,
                });
            }
        }
        if let Some(rec) = self.recording.as_mut() {
            rec.trace.extend(self.world.trace());
        }

        for av in 0..m {
            if self.world.vehicles[av].collided && self.world.vehicles[av].is_active() {
                self.world.retire(av);
                self.assoc[av].detach();
            }
        }
        Ok(out)
    }

    fn episode_metrics(&self) -> Option<EpisodeMetrics> {
        Some(self.acc.finish())
    }
}

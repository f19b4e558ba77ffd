//! Deep Q-learning: online and target networks, experience replay and
//! plain mini-batch gradient descent.

pub mod fnn;
pub mod replay;

use std::cell::RefCell;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tabular::argmax;
use super::{run_episode, Environment, EpsilonSchedule};
use crate::error::{Error, Result};
use crate::metrics::{EpisodeLog, Phase};

pub use fnn::{Activation, Fnn, ForwardCache};
pub use replay::{ReplayBuffer, Transition};

/// Squashed values are clamped to this distance from 0 and 1.
pub const BCE_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// `0.5 (pred - target)^2` on raw values.
    #[default]
    SquaredError,
    /// Binary cross-entropy after squashing both values through `sigmoid(x / tau)`.
    Bce,
}

fn squash(x: f64, tau: f64) -> f64 {
    fnn::sigmoid(x / tau).clamp(BCE_CLAMP, 1.0 - BCE_CLAMP)
}

/// Loss of one prediction against its target. `tau` is only used by BCE.
pub fn loss(pred: f64, target: f64, mode: LossMode, tau: f64) -> f64 {
    match mode {
        LossMode::SquaredError => 0.5 * (pred - target).powi(2),
        LossMode::Bce => {
            let p = squash(pred, tau);
            let t = squash(target, tau);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        }
    }
}

/// `d loss / d pred`.
pub fn loss_grad(pred: f64, target: f64, mode: LossMode, tau: f64) -> f64 {
    match mode {
        LossMode::SquaredError => pred - target,
        LossMode::Bce => {
            let raw = fnn::sigmoid(pred / tau);
            if !(BCE_CLAMP..=1.0 - BCE_CLAMP).contains(&raw) {
                return 0.0;
            }
            let t = squash(target, tau);
            (raw - t) / tau
        }
    }
}

/// Running 95th percentile of recent absolute targets, floored at one.
/// Refreshed explicitly so the temperature is constant between refreshes.
#[derive(Debug, Clone)]
pub struct Temperature {
    window: Vec<f64>,
    cursor: usize,
    capacity: usize,
    tau: f64,
}

impl Temperature {
    pub fn new(capacity: usize) -> Self {
        Self {
            window: Vec::new(),
            cursor: 0,
            capacity: capacity.max(1),
            tau: 1.0,
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn observe(&mut self, target: f64) {
        let v = target.abs();
        if self.window.len() < self.capacity {
            self.window.push(v);
        } else {
            self.window[self.cursor] = v;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    pub fn refresh(&mut self) {
        if self.window.is_empty() {
            return;
        }
        let mut v = self.window.clone();
        let k = ((v.len() as f64 * 0.95).ceil() as usize).clamp(1, v.len()) - 1;
        let (_, p95, _) = v.select_nth_unstable_by(k, f64::total_cmp);
        self.tau = p95.max(1.0);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DqnConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon: EpsilonSchedule,
    pub episodes: usize,
    pub horizon: usize,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Episodes between target-network copies.
    pub target_sync_every: usize,
    /// Stored transitions between gradient steps.
    pub train_every: usize,
    pub loss: LossMode,
    /// Multiplies rewards before they enter the replay buffer.
    pub reward_scale: f64,
    /// Element-wise clip on the batch gradient; zero disables clipping.
    pub grad_clip: f64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 32],
            learning_rate: 1e-3,
            discount: 0.9,
            epsilon: EpsilonSchedule::default(),
            episodes: 1000,
            horizon: 500,
            batch_size: 32,
            replay_capacity: 50_000,
            target_sync_every: 50,
            train_every: 1,
            loss: LossMode::SquaredError,
            reward_scale: 1.0,
            grad_clip: 0.0,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.target_sync_every == 0 || self.train_every == 0 {
            return Err(Error::invalid(
                "batch_size, target_sync_every and train_every must be >= 1",
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("dqn learning_rate must be positive"));
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return Err(Error::invalid("dqn discount must lie in [0, 1]"));
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) || !(self.grad_clip >= 0.0) {
            return Err(Error::invalid(
                "reward_scale must be positive and grad_clip non-negative",
            ));
        }
        Ok(())
    }
}

/// Copies the online parameters into the target network on every
/// `every`-th episode. Returns whether a copy happened.
pub fn sync_target(online: &Fnn, target: &mut Fnn, episode: usize, every: usize) -> bool {
    if episode.is_multiple_of(every.max(1)) {
        target.clone_from(online);
        true
    } else {
        false
    }
}

/// Online network, target network, replay memory and BCE temperature.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub online: Fnn,
    pub target: Fnn,
    pub replay: ReplayBuffer,
    pub temperature: Temperature,
    pub config: DqnConfig,
    features: usize,
    encoded: Vec<Vec<f64>>,
    cache: ForwardCache,
    grad: Vec<f64>,
}

impl DqnAgent {
    /// `encode` fills the numeric encoding of every discrete state.
    pub fn new<R: Rng + ?Sized>(
        config: DqnConfig,
        states: usize,
        actions: usize,
        features: usize,
        encode: impl Fn(usize, &mut [f64]),
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let online = Fnn::q_network(features, &config.hidden, actions, rng)?;
        let encoded = (0..states)
            .map(|s| {
                let mut v = vec![0.0; features];
                encode(s, &mut v);
                v
            })
            .collect();
        Ok(Self {
            target: online.clone(),
            grad: vec![0.0; online.params().len()],
            online,
            replay: ReplayBuffer::new(config.replay_capacity),
            temperature: Temperature::new(10_000),
            config,
            features,
            encoded,
            cache: ForwardCache::default(),
        })
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn q_values(&self, state: usize) -> Vec<f64> {
        self.online.forward(&self.encoded[state])
    }

    pub fn greedy(&self, state: usize) -> usize {
        argmax(&self.q_values(state))
    }

    pub fn select_action<R: Rng + ?Sized>(&self, state: usize, epsilon: f64, rng: &mut R) -> usize {
        if rng.gen::<f64>() < epsilon {
            rng.gen_range(0..self.online.output_len())
        } else {
            self.greedy(state)
        }
    }

    /// Bootstrap target `r + gamma max_a' Q_target(s', a')`, or `r` at a terminal.
    pub fn target_value(&self, t: &Transition) -> f64 {
        if t.terminal {
            t.reward
        } else {
            let q = self.target.forward(&self.encoded[t.next_state]);
            t.reward + self.config.discount * q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        }
    }

    /// One gradient-descent step on a uniformly sampled mini-batch. Returns
    /// the mean batch loss, or `None` while the buffer holds fewer than a
    /// batch of transitions.
    pub fn train_step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<f64> {
        let m = self.config.batch_size;
        if self.replay.len() < m {
            return None;
        }
        let batch: Vec<Transition> = (0..m)
            .filter_map(|_| self.replay.sample(rng).copied())
            .collect();
        let targets: Vec<f64> = batch.iter().map(|t| self.target_value(t)).collect();
        let tau = self.temperature.tau();
        self.grad.iter_mut().for_each(|g| *g = 0.0);
        let mut total = 0.0;
        for (t, &y) in batch.iter().zip(&targets) {
            self.online
                .forward_cached(&self.encoded[t.state], &mut self.cache);
            let pred = self.cache.output()[t.action];
            total += loss(pred, y, self.config.loss, tau);
            let d = loss_grad(pred, y, self.config.loss, tau) / m as f64;
            self.online
                .backward(&self.cache, t.action, d, &mut self.grad);
        }
        for &y in &targets {
            self.temperature.observe(y);
        }
        let lr = self.config.learning_rate;
        let clip = self.config.grad_clip;
        for (p, &g) in self.online.params_mut().iter_mut().zip(&self.grad) {
            let g = if clip > 0.0 { g.clamp(-clip, clip) } else { g };
            *p -= lr * g;
        }
        Some(total / m as f64)
    }

    /// Writes a versioned text checkpoint of the online network.
    pub fn save<W: Write>(&self, w: W, config_hash: &str) -> Result<()> {
        save_network(&self.online, w, config_hash)
    }
}

pub fn save_network<W: Write>(net: &Fnn, w: W, config_hash: &str) -> Result<()> {
    let mut w = BufWriter::new(w);
    let join = |it: Vec<String>| it.join(",");
    writeln!(w, "# vnetsim fnn v1")?;
    writeln!(
        w,
        "# sizes={} activations={} config_hash={}",
        join(net.sizes().iter().map(|s| s.to_string()).collect()),
        join(net.activations().iter().map(|a| a.to_string()).collect()),
        config_hash
    )?;
    for p in net.params() {
        writeln!(w, "{p}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint written by [`save_network`]; returns it with its config hash.
pub fn load_network<R: Read>(r: R) -> Result<(Fnn, String)> {
    let mut lines = BufReader::new(r).lines();
    let mut next = || -> Result<Option<String>> { lines.next().transpose().map_err(Error::from) };
    if next()?.as_deref().map(str::trim) != Some("# vnetsim fnn v1") {
        return Err(Error::Format("not a network v1 checkpoint".into()));
    }
    let header = next()?.ok_or_else(|| Error::Format("missing checkpoint header".into()))?;
    let field = |key: &str| -> Result<String> {
        header
            .trim_start_matches('#')
            .split_whitespace()
            .find_map(|kv| kv.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
            .map(str::to_owned)
            .ok_or_else(|| Error::Format(format!("checkpoint header lacks `{key}`")))
    };
    let sizes: Vec<usize> = field("sizes")?
        .split(',')
        .map(|s| {
            s.parse()
                .map_err(|_| Error::Format(format!("bad layer size `{s}`")))
        })
        .collect::<Result<_>>()?;
    let acts: Vec<Activation> = field("activations")?
        .split(',')
        .map(str::parse)
        .collect::<Result<_>>()?;
    let hash = field("config_hash")?;
    let mut net = Fnn::zeros(&sizes, &acts).map_err(|e| Error::Format(e.to_string()))?;
    let mut params = Vec::with_capacity(net.params().len());
    while let Some(line) = next()? {
        if line.trim().is_empty() {
            continue;
        }
        params.push(
            line.trim()
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("parameter: {e}")))?,
        );
    }
    net.set_params(&params)
        .map_err(|e| Error::Format(e.to_string()))?;
    Ok((net, hash))
}

/// Trains a shared Q-network from every agent's transitions.
pub fn train<E, R>(
    env: &mut E,
    config: &DqnConfig,
    rng: &mut R,
) -> Result<(DqnAgent, Vec<EpisodeLog>)>
where
    E: Environment + ?Sized,
    R: Rng + ?Sized,
{
    let mut agent = {
        let e = &*env;
        DqnAgent::new(
            config.clone(),
            e.state_count(),
            e.action_count(),
            e.feature_len(),
            |s, out| e.encode(s, out),
            rng,
        )?
    };
    let mut logs = Vec::with_capacity(config.episodes);
    let mut stored = 0usize;
    for episode in 0..config.episodes {
        sync_target(
            &agent.online,
            &mut agent.target,
            episode,
            config.target_sync_every,
        );
        let epsilon = config.epsilon.at(episode);
        let mut loss_sum = 0.0;
        let mut updates = 0usize;
        let shared = RefCell::new((&mut agent, &mut *rng));
        let metrics = run_episode(
            env,
            episode,
            config.horizon,
            |_, s| {
                let (a, r) = &mut *shared.borrow_mut();
                a.select_action(s, epsilon, *r)
            },
            |step| {
                let (a, r) = &mut *shared.borrow_mut();
                a.replay.push(Transition {
                    state: step.state,
                    action: step.action,
                    reward: step.reward * config.reward_scale,
                    next_state: step.next_state,
                    terminal: step.terminal,
                });
                stored += 1;
                if stored.is_multiple_of(config.train_every) {
                    if let Some(l) = a.train_step(*r) {
                        loss_sum += l;
                        updates += 1;
                    }
                }
            },
        )?;
        agent.temperature.refresh();
        if !agent.online.params().iter().all(|p| p.is_finite()) {
            return Err(Error::Invalid(format!(
                "network parameters diverged in episode {episode}"
            )));
        }
        let loss = if updates > 0 {
            loss_sum / updates as f64
        } else {
            0.0
        };
        logs.push(EpisodeLog {
            episode,
            phase: Phase::Train,
            epsilon,
            loss,
            metrics,
        });
    }
    Ok((agent, logs))
}

/// Greedy rollouts of a fixed network.
pub fn evaluate<E>(
    env: &mut E,
    net: &Fnn,
    episodes: usize,
    horizon: usize,
    first_episode: usize,
) -> Result<Vec<EpisodeLog>>
where
    E: Environment + ?Sized,
{
    let features = env.feature_len();
    if net.input_len() != features || net.output_len() != env.action_count() {
        return Err(Error::Contract(format!(
            "network shape {:?} does not fit {features} features and {} actions",
            net.sizes(),
            env.action_count()
        )));
    }
    let encoded: Vec<Vec<f64>> = (0..env.state_count())
        .map(|s| {
            let mut v = vec![0.0; features];
            env.encode(s, &mut v);
            v
        })
        .collect();
    let greedy: Vec<usize> = encoded.iter().map(|x| argmax(&net.forward(x))).collect();
    (first_episode..first_episode + episodes)
        .map(|episode| {
            let metrics = run_episode(env, episode, horizon, |_, s| greedy[s], |_| {})?;
            Ok(EpisodeLog {
                episode,
                phase: Phase::Eval,
                epsilon: 0.0,
                loss: 0.0,
                metrics,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::fixture::ChainMdp;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn loss_examples() {
        assert!((loss(0.0, 0.0, LossMode::Bce, 1.0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(loss(3.0, 3.0, LossMode::SquaredError, 1.0), 0.0);
        assert_eq!(loss_grad(3.0, 3.0, LossMode::SquaredError, 1.0), 0.0);
        let far = loss(-1e6, 1e6, LossMode::Bce, 1.0);
        assert!(far.is_finite() && (far - -(BCE_CLAMP.ln())).abs() < 1e-5);
        assert_eq!(loss_grad(-1e6, 1e6, LossMode::Bce, 1.0), 0.0);
    }

    #[test]
    fn bce_is_minimised_at_equality() {
        for &y in &[-3.0, 0.0, 0.7, 12.0] {
            let at = loss(y, y, LossMode::Bce, 2.0);
            for d in [-0.5, -0.01, 0.01, 0.5] {
                assert!(loss(y + d, y, LossMode::Bce, 2.0) > at);
            }
            assert!(loss_grad(y, y, LossMode::Bce, 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn temperature_tracks_p95_with_floor() {
        let mut t = Temperature::new(100);
        t.refresh();
        assert_eq!(t.tau(), 1.0);
        for i in 1..=100 {
            t.observe(-(i as f64));
        }
        t.refresh();
        assert_eq!(t.tau(), 95.0);
        let mut small = Temperature::new(10);
        small.observe(0.2);
        small.refresh();
        assert_eq!(small.tau(), 1.0);
    }

    #[test]
    fn sync_schedule() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut online = Fnn::q_network(2, &[4], 2, &mut rng).unwrap();
        let mut target = Fnn::q_network(2, &[4], 2, &mut rng).unwrap();
        assert!(sync_target(&online, &mut target, 50, 50));
        assert_eq!(online.params(), target.params());
        online.params_mut()[0] += 1.0;
        assert!(!sync_target(&online, &mut target, 51, 50));
        assert_ne!(online.params(), target.params());
        assert!(sync_target(&online, &mut target, 100, 50));
        assert_eq!(online.params(), target.params());
    }

    fn single_transition_agent(seed: u64) -> DqnAgent {
        let cfg = DqnConfig {
            discount: 0.0,
            hidden: vec![8, 4],
            learning_rate: 0.05,
            batch_size: 4,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut agent = DqnAgent::new(
            cfg,
            2,
            2,
            2,
            |s, out: &mut [f64]| {
                out.fill(0.0);
                out[s] = 1.0;
            },
            &mut rng,
        )
        .unwrap();
        for _ in 0..4 {
            agent.replay.push(Transition {
                state: 1,
                action: 0,
                reward: 0.75,
                next_state: 0,
                terminal: false,
            });
        }
        agent
    }

    #[test]
    fn repeated_transition_regresses_to_reward() {
        let mut agent = single_transition_agent(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5000 {
            agent.train_step(&mut rng);
        }
        assert!((agent.q_values(1)[0] - 0.75).abs() < 1e-6);
    }

    #[test]
    fn frozen_target_gives_identical_targets() {
        let mut agent = single_transition_agent(4);
        agent.config.discount = 0.9;
        let t = *agent.replay.iter().next().unwrap();
        let before = agent.target_value(&t);
        agent.train_step(&mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(agent.target_value(&t), before);
    }

    #[test]
    fn warm_up_skips_updates() {
        let cfg = DqnConfig {
            hidden: vec![4],
            ..Default::default()
        };
        let mut agent = DqnAgent::new(
            cfg,
            2,
            2,
            2,
            |s, out: &mut [f64]| out[s % 2] = 1.0,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        let params = agent.online.params().to_vec();
        assert_eq!(agent.train_step(&mut ChaCha8Rng::seed_from_u64(0)), None);
        assert_eq!(agent.online.params(), params.as_slice());
    }

    #[test]
    fn training_is_reproducible() {
        let cfg = DqnConfig {
            hidden: vec![8, 4],
            episodes: 30,
            horizon: 20,
            target_sync_every: 5,
            ..Default::default()
        };
        let run = || {
            let (a, logs) = train(
                &mut ChainMdp::new(1),
                &cfg,
                &mut ChaCha8Rng::seed_from_u64(2),
            )
            .unwrap();
            (
                a.online.params().to_vec(),
                logs.iter().map(|l| l.loss).collect::<Vec<_>>(),
            )
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = Fnn::q_network(8, &[6, 5], 21, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let mut buf = Vec::new();
        save_network(&net, &mut buf, "h1").unwrap();
        let (back, hash) = load_network(buf.as_slice()).unwrap();
        assert_eq!(back, net);
        assert_eq!(hash, "h1");
        assert!(load_network(
            &b"# vnetsim fnn v1\n# sizes=2,2 activations=linear config_hash=x\n1\n"[..]
        )
        .is_err());
    }
}

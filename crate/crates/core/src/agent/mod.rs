//! Learning agents and the environment interface they drive.

pub mod dqn;
pub mod fixture;
pub mod tabular;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{EpisodeMetrics, MetricsAccumulator, StepSample};

/// One agent's transition `(s, a, r, s')`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentStep {
    pub agent: usize,
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
    /// The trajectory ended here; no bootstrap from `next_state`.
    pub terminal: bool,
}

/// A discrete multi-agent environment. Agents act simultaneously; only the
/// agents returned by [`Environment::pending`] act in a given step.
pub trait Environment {
    fn state_count(&self) -> usize;
    fn action_count(&self) -> usize;
    fn agent_count(&self) -> usize;

    /// Length of the numeric state encoding used by function approximators.
    fn feature_len(&self) -> usize;
    fn encode(&self, state: usize, out: &mut [f64]);

    fn reset(&mut self, episode: usize);

    /// `(agent, state)` for every agent that must act now.
    fn pending(&self) -> Vec<(usize, usize)>;

    fn step(&mut self, actions: &[(usize, usize)]) -> Result<Vec<AgentStep>>;

    /// Domain metrics for the episode so far, if the environment keeps any.
    fn episode_metrics(&self) -> Option<EpisodeMetrics> {
        None
    }
}

/// Exponential annealing `max(end, start * decay^episode)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 1.0,
            end: 0.05,
            decay: 0.995,
        }
    }
}

impl EpsilonSchedule {
    pub fn constant(eps: f64) -> Self {
        Self {
            start: eps,
            end: eps,
            decay: 1.0,
        }
    }

    pub fn at(&self, episode: usize) -> f64 {
        (self.start * self.decay.powi(episode.min(i32::MAX as usize) as i32)).max(self.end)
    }
}

/// Whether all AVs share one value function or each learns its own.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sharing {
    #[default]
    Shared,
    Independent,
}

impl Sharing {
    pub fn slots(self, agents: usize) -> usize {
        match self {
            Sharing::Shared => 1,
            Sharing::Independent => agents.max(1),
        }
    }

    pub fn slot(self, agent: usize) -> usize {
        match self {
            Sharing::Shared => 0,
            Sharing::Independent => agent,
        }
    }
}

/// Plays one episode of `horizon` steps.
///
/// `choose` picks an action for `(agent, state)`; `learn` sees every
/// transition in arrival order. Rewards must be finite.
pub fn run_episode<E, C, L>(
    env: &mut E,
    episode: usize,
    horizon: usize,
    mut choose: C,
    mut learn: L,
) -> Result<EpisodeMetrics>
where
    E: Environment + ?Sized,
    C: FnMut(usize, usize) -> usize,
    L: FnMut(&AgentStep),
{
    env.reset(episode);
    let mut fallback = MetricsAccumulator::default();
    let mut actions = Vec::new();
    for t in 0..horizon {
        actions.clear();
        actions.extend(
            env.pending()
                .into_iter()
                .map(|(agent, s)| (agent, choose(agent, s))),
        );
        for step in env.step(&actions)? {
            if !step.reward.is_finite() {
                return Err(Error::NonFiniteReward {
                    episode,
                    step: t,
                    agent: step.agent,
                    reward: step.reward,
                });
            }
            fallback.push(&StepSample {
                r_tran: step.reward,
                ..Default::default()
            });
            learn(&step);
        }
    }
    Ok(env.episode_metrics().unwrap_or_else(|| fallback.finish()))
}

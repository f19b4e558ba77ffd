//! Tabular Q-learning with epsilon-greedy exploration.

use std::cell::RefCell;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{run_episode, AgentStep, Environment, EpsilonSchedule, Sharing};
use crate::error::{Error, Result};
use crate::metrics::{EpisodeLog, Phase};

/// Dense `states x actions` table of action values, zero-initialised.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    states: usize,
    actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn new(states: usize, actions: usize) -> Self {
        Self {
            states,
            actions,
            values: vec![0.0; states * actions],
        }
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.actions + a] = v;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.actions..(s + 1) * self.actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Highest-valued action, lowest index on ties.
    pub fn greedy(&self, s: usize) -> usize {
        argmax(self.row(s))
    }

    pub fn max(&self, s: usize) -> f64 {
        self.row(s)
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// First index of the maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// With probability `epsilon` a uniformly random action, otherwise greedy.
pub fn select_action<R: Rng + ?Sized>(q: &QTable, s: usize, epsilon: f64, rng: &mut R) -> usize {
    if rng.gen::<f64>() < epsilon {
        rng.gen_range(0..q.actions())
    } else {
        q.greedy(s)
    }
}

/// `Q(s,a) += alpha (r + gamma max_a' Q(s',a') - Q(s,a))`; with
/// `next = None` the bootstrap term is dropped. Returns the new value.
pub fn bellman_update(
    q: &mut QTable,
    s: usize,
    a: usize,
    r: f64,
    next: Option<usize>,
    alpha: f64,
    gamma: f64,
) -> f64 {
    let bootstrap = next.map_or(0.0, |n| gamma * q.max(n));
    let old = q.get(s, a);
    let new = old + alpha * (r + bootstrap - old);
    q.set(s, a, new);
    new
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon: EpsilonSchedule,
    pub episodes: usize,
    pub horizon: usize,
    pub sharing: Sharing,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            discount: 0.9,
            epsilon: EpsilonSchedule::default(),
            episodes: 1000,
            horizon: 500,
            sharing: Sharing::Shared,
        }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::invalid("learning_rate must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return Err(Error::invalid("discount must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// One table per sharing slot.
#[derive(Debug, Clone, PartialEq)]
pub struct QLearner {
    pub tables: Vec<QTable>,
    pub sharing: Sharing,
}

impl QLearner {
    pub fn new(states: usize, actions: usize, agents: usize, sharing: Sharing) -> Self {
        Self {
            tables: vec![QTable::new(states, actions); sharing.slots(agents)],
            sharing,
        }
    }

    pub fn table(&self, agent: usize) -> &QTable {
        &self.tables[self.sharing.slot(agent).min(self.tables.len() - 1)]
    }

    fn table_mut(&mut self, agent: usize) -> &mut QTable {
        let i = self.sharing.slot(agent).min(self.tables.len() - 1);
        &mut self.tables[i]
    }

    pub fn greedy(&self, agent: usize, s: usize) -> usize {
        self.table(agent).greedy(s)
    }

    pub fn learn(&mut self, step: &AgentStep, cfg: &LearnConfig) {
        let next = (!step.terminal).then_some(step.next_state);
        let q = self.table_mut(step.agent);
        bellman_update(
            q,
            step.state,
            step.action,
            step.reward,
            next,
            cfg.learning_rate,
            cfg.discount,
        );
    }

    /// Writes the tables as text: a two-line header then one CSV row per state.
    pub fn save<W: Write>(&self, w: W, config_hash: &str) -> Result<()> {
        let mut w = BufWriter::new(w);
        let t = &self.tables[0];
        writeln!(w, "# vnetsim q-table v1")?;
        writeln!(
            w,
            "# states={} actions={} tables={} sharing={} config_hash={}",
            t.states,
            t.actions,
            self.tables.len(),
            match self.sharing {
                Sharing::Shared => "shared",
                Sharing::Independent => "independent",
            },
            config_hash
        )?;
        for table in &self.tables {
            for s in 0..table.states {
                let row: Vec<String> = table.row(s).iter().map(|v| v.to_string()).collect();
                writeln!(w, "{}", row.join(","))?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a table written by [`QLearner::save`]; returns it with its config hash.
    pub fn load<R: Read>(r: R) -> Result<(Self, String)> {
        let mut lines = BufReader::new(r).lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Format("unexpected end of q-table".into()))?
                .map_err(Error::from)
        };
        if next()?.trim() != "# vnetsim q-table v1" {
            return Err(Error::Format("not a q-table v1 file".into()));
        }
        let header = next()?;
        let field = |key: &str| -> Result<String> {
            header
                .trim_start_matches('#')
                .split_whitespace()
                .find_map(|kv| kv.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
                .map(str::to_owned)
                .ok_or_else(|| Error::Format(format!("q-table header lacks `{key}`")))
        };
        let num = |key: &str| -> Result<usize> {
            field(key)?
                .parse()
                .map_err(|_| Error::Format(format!("bad `{key}` in q-table header")))
        };
        let (states, actions, count) = (num("states")?, num("actions")?, num("tables")?);
        let sharing = match field("sharing")?.as_str() {
            "shared" => Sharing::Shared,
            "independent" => Sharing::Independent,
            other => return Err(Error::Format(format!("unknown sharing `{other}`"))),
        };
        let hash = field("config_hash")?;
        let mut tables = Vec::with_capacity(count);
        for _ in 0..count {
            let mut t = QTable::new(states, actions);
            for s in 0..states {
                let line = next()?;
                let vals: Vec<f64> = line
                    .split(',')
                    .map(|v| v.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::Format(format!("row {s}: {e}")))?;
                if vals.len() != actions {
                    return Err(Error::Format(format!(
                        "row {s} has {} values, expected {actions}",
                        vals.len()
                    )));
                }
                t.values[s * actions..(s + 1) * actions].copy_from_slice(&vals);
            }
            tables.push(t);
        }
        Ok((Self { tables, sharing }, hash))
    }
}

/// Runs Q-learning for `cfg.episodes` episodes; returns the learned tables
/// and one log row per episode.
pub fn train<E, R>(
    env: &mut E,
    cfg: &LearnConfig,
    rng: &mut R,
) -> Result<(QLearner, Vec<EpisodeLog>)>
where
    E: Environment + ?Sized,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    let mut learner = QLearner::new(
        env.state_count(),
        env.action_count(),
        env.agent_count(),
        cfg.sharing,
    );
    let mut logs = Vec::with_capacity(cfg.episodes);
    for episode in 0..cfg.episodes {
        let epsilon = cfg.epsilon.at(episode);
        // Both closures need the learner; they are never called re-entrantly.
        let cell = RefCell::new(&mut learner);
        let metrics = run_episode(
            env,
            episode,
            cfg.horizon,
            |agent, s| select_action(cell.borrow().table(agent), s, epsilon, rng),
            |step| cell.borrow_mut().learn(step, cfg),
        )?;
        logs.push(EpisodeLog {
            episode,
            phase: Phase::Train,
            epsilon,
            loss: 0.0,
            metrics,
        });
    }
    Ok((learner, logs))
}

/// Greedy rollouts with no learning.
pub fn evaluate<E>(
    env: &mut E,
    learner: &QLearner,
    episodes: usize,
    horizon: usize,
    first_episode: usize,
) -> Result<Vec<EpisodeLog>>
where
    E: Environment + ?Sized,
{
    (first_episode..first_episode + episodes)
        .map(|episode| {
            let metrics = run_episode(
                env,
                episode,
                horizon,
                |agent, s| learner.greedy(agent, s),
                |_| {},
            )?;
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

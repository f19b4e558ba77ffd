//! Experiment harness: scenario config, sweeps over one axis, baselines and
//! result files.

pub mod baseline;
pub mod config;
pub mod io;

use std::fs::File;
use std::path::{Path, PathBuf};

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::agent::dqn::{self, Fnn};
use crate::agent::run_episode;
use crate::agent::tabular::{self, QLearner};
use crate::env::{Recording, SelectionRule, VnetEnv};
use crate::error::{Error, Result};
use crate::metrics::{EpisodeLog, Phase};

pub use config::{AgentKind, Axis, ScenarioConfig};
use io::{EpisodeRow, SummaryRow, SweepSummary};

/// Evaluation episodes are numbered from here so their random streams never
/// coincide with training episodes.
pub const EVAL_EPISODE_OFFSET: usize = 1 << 32;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one sweep point, mixed from the base seed, the axis position and
/// the replicate seed. The agent kind is deliberately left out so that all
/// agents face the same traffic at a given point.
pub fn point_seed(base_seed: u64, axis_index: usize, seed: u64) -> u64 {
    splitmix(base_seed ^ splitmix(axis_index as u64 ^ splitmix(seed)))
}

fn agent_rng(point_seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(point_seed ^ 0xA6E7))
}

/// A policy that can be rolled out greedily.
#[derive(Debug, Clone)]
pub enum Policy {
    Tabular(QLearner),
    Dqn(Fnn),
    Baseline(AgentKind),
}

impl Policy {
    pub fn kind(&self) -> AgentKind {
        match self {
            Policy::Tabular(_) => AgentKind::Tabular,
            Policy::Dqn(_) => AgentKind::Dqn,
            Policy::Baseline(k) => *k,
        }
    }

    /// Writes a learned policy; baselines have nothing to store.
    pub fn save(&self, path: &Path, config_hash: &str) -> Result<()> {
        match self {
            Policy::Tabular(q) => q.save(File::create(path)?, config_hash),
            Policy::Dqn(net) => dqn::save_network(net, File::create(path)?, config_hash),
            Policy::Baseline(_) => Ok(()),
        }
    }

    /// Reads an artifact written by [`Policy::save`], detecting its type from
    /// the first line.
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path)?;
        if text.starts_with("# vnetsim q-table") {
            let (q, h) = QLearner::load(text.as_bytes())?;
            Ok((Policy::Tabular(q), h))
        } else if text.starts_with("# vnetsim fnn") {
            let (n, h) = dqn::load_network(text.as_bytes())?;
            Ok((Policy::Dqn(n), h))
        } else {
            Err(Error::Format(format!(
                "{} is not a policy artifact",
                path.display()
            )))
        }
    }
}

pub fn make_env(cfg: &ScenarioConfig, kind: AgentKind, seed: u64) -> Result<VnetEnv> {
    let mut env_cfg = cfg.env_config();
    if kind == AgentKind::NearestBs {
        env_cfg.selection = SelectionRule::Nearest;
    }
    VnetEnv::new(env_cfg, seed)
}

/// Trains a learning agent, or returns the fixed policy for a baseline.
pub fn train_policy(
    cfg: &ScenarioConfig,
    kind: AgentKind,
    seed: u64,
) -> Result<(Policy, Vec<EpisodeLog>)> {
    let mut env = make_env(cfg, kind, seed)?;
    let mut rng = agent_rng(seed);
    match kind {
        AgentKind::Tabular => {
            let (q, logs) = tabular::train(&mut env, &cfg.learn_config(), &mut rng)?;
            Ok((Policy::Tabular(q), logs))
        }
        AgentKind::Dqn => {
            let (a, logs) = dqn::train(&mut env, &cfg.dqn_config(), &mut rng)?;
            Ok((Policy::Dqn(a.online), logs))
        }
        baseline => Ok((Policy::Baseline(baseline), Vec::new())),
    }
}

/// Greedy rollouts of `policy` on `cfg.eval_episodes` fresh episodes.
/// Never modifies the policy.
pub fn evaluate_policy(
    cfg: &ScenarioConfig,
    policy: &Policy,
    seed: u64,
    record: bool,
) -> Result<(Vec<EpisodeLog>, Option<Recording>)> {
    let kind = policy.kind();
    let mut env = make_env(cfg, kind, seed)?;
    if record {
        env.start_recording();
    }
    let (n, h, first) = (cfg.eval_episodes, cfg.horizon, EVAL_EPISODE_OFFSET);
    let logs = match policy {
        Policy::Tabular(q) => tabular::evaluate(&mut env, q, n, h, first)?,
        Policy::Dqn(net) => dqn::evaluate(&mut env, net, n, h, first)?,
        Policy::Baseline(k) => (first..first + n)
            .map(|episode| {
                let metrics = run_episode(
                    &mut env,
                    episode,
                    h,
                    |_, s| baseline::baseline_action(*k, s),
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
            .collect::<Result<_>>()?,
    };
    Ok((logs, env.take_recording()))
}

/// Everything produced at one `(axis value, seed)` point.
#[derive(Debug, Clone)]
pub struct PointResult {
    pub axis_index: usize,
    pub axis_value: f64,
    pub seed: u64,
    pub rows: Vec<EpisodeRow>,
    pub summary: SummaryRow,
    pub recording: Option<Recording>,
}

impl PointResult {
    pub fn file_stem(&self, agent: AgentKind, axis: Axis) -> String {
        format!(
            "{}_{}_{}_seed{}",
            agent.as_str(),
            axis.as_str(),
            self.axis_value,
            self.seed
        )
    }
}

pub fn run_point(cfg: &ScenarioConfig, axis_index: usize, seed: u64) -> Result<PointResult> {
    let value = *cfg
        .values
        .get(axis_index)
        .ok_or_else(|| Error::Config(format!("axis index {axis_index} out of range")))?;
    let mut point = cfg.clone();
    cfg.axis.apply(&mut point, value)?;
    point.validate()?;
    let s = point_seed(cfg.base_seed, axis_index, seed);
    info!(
        "{} {}={} seed={}: start",
        cfg.agent.as_str(),
        cfg.axis.as_str(),
        value,
        seed
    );
    let (policy, train_logs) = train_policy(&point, cfg.agent, s)?;
    let (eval_logs, recording) = evaluate_policy(&point, &policy, s, cfg.trace)?;
    let (agent, axis) = (cfg.agent.as_str(), cfg.axis.as_str());
    let rows: Vec<EpisodeRow> = train_logs
        .iter()
        .chain(&eval_logs)
        .map(|l| EpisodeRow::new(agent, axis, value, seed, l))
        .collect();
    let summary = io::summarize(&rows)
        .ok_or_else(|| Error::Config("eval_episodes must be at least 1".into()))?;
    info!(
        "{} {}={} seed={}: rate_tq={:.4e}",
        agent, axis, value, seed, summary.rate_tq
    );
    Ok(PointResult {
        axis_index,
        axis_value: value,
        seed,
        rows,
        summary,
        recording,
    })
}

/// Runs every `(axis value, seed)` point in parallel. Results come back in
/// axis-then-seed order whatever order the workers finish in.
pub fn run_sweep(cfg: &ScenarioConfig) -> Result<Vec<PointResult>> {
    cfg.validate()?;
    let points: Vec<(usize, u64)> = (0..cfg.values.len())
        .flat_map(|i| cfg.seeds.iter().map(move |&s| (i, s)))
        .collect();
    points
        .par_iter()
        .map(|&(i, s)| run_point(cfg, i, s))
        .collect()
}

/// Paths written by [`write_sweep`].
#[derive(Debug, Clone)]
pub struct SweepFiles {
    pub episodes: Vec<PathBuf>,
    pub summary_csv: PathBuf,
    pub summary_json: PathBuf,
}

/// Writes one episodes CSV per point (plus step and trace CSVs when
/// recorded), `summary.csv` and `summary.json`.
pub fn write_sweep(
    cfg: &ScenarioConfig,
    results: &[PointResult],
    out: &Path,
) -> Result<SweepFiles> {
    std::fs::create_dir_all(out)?;
    let mut episodes = Vec::with_capacity(results.len());
    for r in results {
        let stem = r.file_stem(cfg.agent, cfg.axis);
        let path = out.join(format!("{stem}_episodes.csv"));
        io::write_rows(&path, &r.rows)?;
        episodes.push(path);
        if let Some(rec) = &r.recording {
            io::write_recording(
                &out.join(format!("{stem}_steps.csv")),
                &out.join(format!("{stem}_trace.csv")),
                rec,
            )?;
        }
    }
    let rows: Vec<SummaryRow> = results.iter().map(|r| r.summary.clone()).collect();
    let summary_csv = out.join("summary.csv");
    io::write_rows(&summary_csv, &rows)?;
    let summary_json = out.join("summary.json");
    io::write_json(
        &summary_json,
        &SweepSummary {
            agent: cfg.agent.as_str().to_owned(),
            axis: cfg.axis.as_str().to_owned(),
            values: cfg.values.clone(),
            seeds: cfg.seeds.clone(),
            config_hash: cfg.hash(),
            rows,
        },
    )?;
    Ok(SweepFiles {
        episodes,
        summary_csv,
        summary_json,
    })
}

/// Seed-averaged summary for one axis value: `(mean, standard error)` of a
/// metric across the rows whose `axis_value` matches.
pub fn seed_mean(rows: &[SummaryRow], value: f64, metric: fn(&SummaryRow) -> f64) -> (f64, f64) {
    let xs: Vec<f64> = rows
        .iter()
        .filter(|r| r.axis_value == value)
        .map(metric)
        .collect();
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    let se = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt()
    } else {
        0.0
    };
    (mean, se)
}

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use vnetsim::harness::{self, io, AgentKind, Axis, Policy, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "vnetsim",
    version,
    about = "AV driving and RF/THz network-selection co-simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent at one scenario and store the learned policy.
    Train(Common),
    /// Greedy rollouts of a stored policy.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Q-table or network checkpoint written by `train`.
        #[arg(long)]
        policy: PathBuf,
    },
    /// Train and evaluate over every axis value and seed.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// Config file with `key = value` lines; `VNETSIM_<KEY>` variables override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    agent: Option<AgentKind>,
    #[arg(long)]
    axis: Option<Axis>,
    /// Comma-separated axis values.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    /// Comma-separated replicate seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write per-step records and vehicle traces for evaluation episodes.
    #[arg(long)]
    trace: bool,
}

impl Common {
    fn load(&self) -> Result<ScenarioConfig> {
        let mut cfg = ScenarioConfig::load(self.config.as_deref(), std::env::vars())?;
        if let Some(a) = self.agent {
            cfg.agent = a;
        }
        if let Some(a) = self.axis {
            cfg.axis = a;
        }
        if let Some(v) = &self.values {
            cfg.values = v.clone();
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = s.clone();
        }
        if let Some(e) = self.episodes {
            cfg.episodes = e;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        cfg.trace |= self.trace;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// The single scenario used by `train` and `evaluate`: the first axis value.
fn single_point(cfg: &ScenarioConfig) -> Result<ScenarioConfig> {
    let mut point = cfg.clone();
    cfg.axis.apply(&mut point, cfg.values[0])?;
    point.validate()?;
    Ok(point)
}

fn write_eval(
    cfg: &ScenarioConfig,
    policy: &Policy,
    tag: &str,
    train_rows: Vec<io::EpisodeRow>,
) -> Result<()> {
    let point = single_point(cfg)?;
    let value = cfg.values[0];
    let mut summaries = Vec::new();
    for &seed in &cfg.seeds {
        let s = harness::point_seed(cfg.base_seed, 0, seed);
        let (logs, rec) = harness::evaluate_policy(&point, policy, s, cfg.trace)?;
        let mut rows: Vec<io::EpisodeRow> = train_rows
            .iter()
            .filter(|r| r.seed == seed)
            .cloned()
            .collect();
        rows.extend(logs.iter().map(|l| {
            io::EpisodeRow::new(policy.kind().as_str(), cfg.axis.as_str(), value, seed, l)
        }));
        let stem = format!("{}_{}_seed{}", policy.kind().as_str(), tag, seed);
        io::write_rows(&cfg.out_dir.join(format!("{stem}_episodes.csv")), &rows)?;
        if let Some(rec) = rec {
            io::write_recording(
                &cfg.out_dir.join(format!("{stem}_steps.csv")),
                &cfg.out_dir.join(format!("{stem}_trace.csv")),
                &rec,
            )?;
        }
        summaries.push(io::summarize(&rows).context("no evaluation episodes")?);
    }
    io::write_rows(&cfg.out_dir.join(format!("{tag}_summary.csv")), &summaries)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(common) => {
            let cfg = common.load()?;
            std::fs::create_dir_all(&cfg.out_dir)?;
            let point = single_point(&cfg)?;
            let seed = cfg.seeds[0];
            let s = harness::point_seed(cfg.base_seed, 0, seed);
            let (policy, logs) = harness::train_policy(&point, cfg.agent, s)?;
            let ext = match policy {
                Policy::Tabular(_) => "qtable.csv",
                Policy::Dqn(_) => "fnn.txt",
                Policy::Baseline(_) => bail!(
                    "{} is a fixed policy; use `sweep` or `evaluate`",
                    cfg.agent.as_str()
                ),
            };
            let path = cfg
                .out_dir
                .join(format!("{}_seed{}_{ext}", cfg.agent.as_str(), seed));
            policy.save(&path, &point.hash())?;
            info!("policy written to {}", path.display());
            let rows = logs
                .iter()
                .map(|l| {
                    io::EpisodeRow::new(
                        cfg.agent.as_str(),
                        cfg.axis.as_str(),
                        cfg.values[0],
                        seed,
                        l,
                    )
                })
                .collect();
            let cfg = ScenarioConfig {
                seeds: vec![seed],
                ..cfg
            };
            write_eval(&cfg, &policy, "train", rows)?;
            std::fs::write(cfg.out_dir.join("config.toml"), cfg.to_toml())?;
            println!("{}", path.display());
        }
        Command::Evaluate { common, policy } => {
            let cfg = common.load()?;
            std::fs::create_dir_all(&cfg.out_dir)?;
            let (policy, hash) = if common.agent.is_some_and(|a| !a.learns()) {
                (Policy::Baseline(cfg.agent), String::new())
            } else {
                Policy::load(&policy).with_context(|| format!("loading {}", policy.display()))?
            };
            let expected = single_point(&cfg)?.hash();
            if !hash.is_empty() && hash != expected {
                log::warn!("policy was trained with config {hash}, evaluating under {expected}");
            }
            write_eval(&cfg, &policy, "eval", Vec::new())?;
        }
        Command::Sweep(common) => {
            let cfg = common.load()?;
            let results = harness::run_sweep(&cfg)?;
            let files = harness::write_sweep(&cfg, &results, &cfg.out_dir)?;
            std::fs::write(cfg.out_dir.join("config.toml"), cfg.to_toml())?;
            println!("{}", files.summary_csv.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

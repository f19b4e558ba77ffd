//! CSV and JSON output of sweep results.
//!
//! Column orders are fixed by the field order of the row structs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{Recording, StepRecord};
use crate::error::{Error, Result};
use crate::metrics::{EpisodeLog, Phase};
use crate::road::TraceRecord;

/// One line of a per-episode CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub agent: String,
    pub axis: String,
    pub axis_value: f64,
    pub seed: u64,
    pub episode: usize,
    pub phase: Phase,
    pub epsilon: f64,
    pub loss: f64,
    pub av_steps: usize,
    pub reward: f64,
    pub r_tran: f64,
    pub r_tele: f64,
    pub rate_tq: f64,
    pub rate_tij: f64,
    pub handoff_prob: f64,
    pub collision_rate: f64,
    pub velocity: f64,
    pub quota_violations: usize,
    pub rate_violations: usize,
    pub k_violations: usize,
}

impl EpisodeRow {
    pub fn new(agent: &str, axis: &str, axis_value: f64, seed: u64, log: &EpisodeLog) -> Self {
        let m = &log.metrics;
        Self {
            agent: agent.to_owned(),
            axis: axis.to_owned(),
            axis_value,
            seed,
            episode: log.episode,
            phase: log.phase,
            epsilon: log.epsilon,
            loss: log.loss,
            av_steps: m.av_steps,
            reward: m.reward,
            r_tran: m.r_tran,
            r_tele: m.r_tele,
            rate_tq: m.rate_tq,
            rate_tij: m.rate_tij,
            handoff_prob: m.handoff_prob,
            collision_rate: m.collision_rate,
            velocity: m.velocity,
            quota_violations: m.quota_violations,
            rate_violations: m.rate_violations,
            k_violations: m.k_violations,
        }
    }
}

/// Evaluation averages for one `(agent, axis value, seed)` point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub agent: String,
    pub axis: String,
    pub axis_value: f64,
    pub seed: u64,
    pub eval_episodes: usize,
    pub reward: f64,
    pub r_tran: f64,
    pub r_tele: f64,
    pub rate_tq: f64,
    pub rate_tij: f64,
    pub handoff_prob: f64,
    pub collision_rate: f64,
    pub velocity: f64,
    pub quota_violations: usize,
    pub rate_violations: usize,
    pub k_violations: usize,
}

/// Means of the evaluation rows of one point; violation counts are summed.
/// Returns `None` when there are no evaluation rows.
pub fn summarize(rows: &[EpisodeRow]) -> Option<SummaryRow> {
    let eval: Vec<&EpisodeRow> = rows.iter().filter(|r| r.phase == Phase::Eval).collect();
    mean_row(&eval)
}

/// Same averages over the last `ceil(fraction * n)` training episodes, the
/// plateau of the learning curve. `eval_episodes` holds the number of
/// episodes averaged.
pub fn converged(rows: &[EpisodeRow], fraction: f64) -> Option<SummaryRow> {
    let train: Vec<&EpisodeRow> = rows.iter().filter(|r| r.phase == Phase::Train).collect();
    let n = ((train.len() as f64 * fraction).ceil() as usize).clamp(1, train.len().max(1));
    mean_row(&train[train.len().saturating_sub(n)..])
}

fn mean_row(rows: &[&EpisodeRow]) -> Option<SummaryRow> {
    let first = rows.first()?;
    let n = rows.len() as f64;
    let mean = |f: fn(&EpisodeRow) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
    Some(SummaryRow {
        agent: first.agent.clone(),
        axis: first.axis.clone(),
        axis_value: first.axis_value,
        seed: first.seed,
        eval_episodes: rows.len(),
        reward: mean(|r| r.reward),
        r_tran: mean(|r| r.r_tran),
        r_tele: mean(|r| r.r_tele),
        rate_tq: mean(|r| r.rate_tq),
        rate_tij: mean(|r| r.rate_tij),
        handoff_prob: mean(|r| r.handoff_prob),
        collision_rate: mean(|r| r.collision_rate),
        velocity: mean(|r| r.velocity),
        quota_violations: rows.iter().map(|r| r.quota_violations).sum(),
        rate_violations: rows.iter().map(|r| r.rate_violations).sum(),
        k_violations: rows.iter().map(|r| r.k_violations).sum(),
    })
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

/// Writes the per-step records and vehicle trace of a recording.
pub fn write_recording(steps_path: &Path, trace_path: &Path, rec: &Recording) -> Result<()> {
    let mut w = BufWriter::new(File::create(steps_path)?);
    writeln!(w, "{}", StepRecord::HEADER)?;
    for s in &rec.steps {
        writeln!(w, "{}", s.to_csv_line())?;
    }
    w.flush()?;
    let mut w = BufWriter::new(File::create(trace_path)?);
    writeln!(w, "{}", TraceRecord::HEADER)?;
    for t in &rec.trace {
        writeln!(w, "{}", t.to_csv_line())?;
    }
    w.flush()?;
    Ok(())
}

/// Whole-sweep JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub agent: String,
    pub axis: String,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
    pub config_hash: String,
    pub rows: Vec<SummaryRow>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(w, value).map_err(|e| Error::Format(e.to_string()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))
}

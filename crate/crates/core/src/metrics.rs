use serde::{Deserialize, Serialize};

/// Per-episode averages over acting AV-steps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub av_steps: usize,
    pub reward: f64,
    pub r_tran: f64,
    pub r_tele: f64,
    /// Handoff-aware rate `T_q`, bits/s (zero on unserved steps).
    pub rate_tq: f64,
    /// Raw link rate of the serving station, bits/s.
    pub rate_tij: f64,
    /// Handoffs per AV-step.
    pub handoff_prob: f64,
    /// Collisions per AV-step.
    pub collision_rate: f64,
    pub velocity: f64,
    pub quota_violations: usize,
    pub rate_violations: usize,
    pub k_violations: usize,
}

impl EpisodeMetrics {
    pub fn violations(&self) -> usize {
        self.quota_violations + self.rate_violations + self.k_violations
    }
}

/// Running sums behind [`EpisodeMetrics`].
#[derive(Debug, Clone, Default)]
pub struct MetricsAccumulator {
    n: usize,
    reward: f64,
    r_tran: f64,
    r_tele: f64,
    rate_tq: f64,
    rate_tij: f64,
    handoffs: usize,
    collisions: usize,
    velocity: f64,
    pub quota_violations: usize,
    pub rate_violations: usize,
    pub k_violations: usize,
}

/// One acting AV-step as seen by the accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepSample {
    pub r_tran: f64,
    pub r_tele: f64,
    pub rate_tq: f64,
    pub rate_tij: f64,
    pub handoff: bool,
    pub collision: bool,
    pub velocity: f64,
}

impl MetricsAccumulator {
    pub fn push(&mut self, s: &StepSample) {
        self.n += 1;
        self.reward += s.r_tran + s.r_tele;
        self.r_tran += s.r_tran;
        self.r_tele += s.r_tele;
        self.rate_tq += s.rate_tq;
        self.rate_tij += s.rate_tij;
        self.handoffs += usize::from(s.handoff);
        self.collisions += usize::from(s.collision);
        self.velocity += s.velocity;
    }

    pub fn finish(&self) -> EpisodeMetrics {
        let n = self.n.max(1) as f64;
        EpisodeMetrics {
            av_steps: self.n,
            reward: self.reward / n,
            r_tran: self.r_tran / n,
            r_tele: self.r_tele / n,
            rate_tq: self.rate_tq / n,
            rate_tij: self.rate_tij / n,
            handoff_prob: self.handoffs as f64 / n,
            collision_rate: self.collisions as f64 / n,
            velocity: self.velocity / n,
            quota_violations: self.quota_violations,
            rate_violations: self.rate_violations,
            k_violations: self.k_violations,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Train,
    Eval,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Train => "train",
            Phase::Eval => "eval",
        }
    }
}

/// One row of a learning curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub phase: Phase,
    pub epsilon: f64,
    /// Mean mini-batch loss, zero when no update ran.
    pub loss: f64,
    pub metrics: EpisodeMetrics,
}

//! A two-state, two-action deterministic chain used to check the learners
//! against exact dynamic programming.
//!
//! ```text
//!   state 0: a0 -> stay in 0, r = 0      a1 -> go to 1, r = -1
//!   state 1: a0 -> stay in 1, r = 2      a1 -> go to 0, r = 0
//! ```
//!
//! The optimal policy pays the move cost once and then collects the reward
//! in state 1 forever.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AgentStep, Environment};
use crate::error::{Error, Result};

pub const STATES: usize = 2;
pub const ACTIONS: usize = 2;

/// `(next_state, reward)` for every `(state, action)`.
pub const TRANSITIONS: [[(usize, f64); ACTIONS]; STATES] =
    [[(0, 0.0), (1, -1.0)], [(1, 2.0), (0, 0.0)]];

/// Largest reward magnitude in the chain.
pub const MAX_ABS_REWARD: f64 = 2.0;

#[derive(Debug, Clone)]
pub struct ChainMdp {
    state: usize,
    rng: ChaCha8Rng,
}

impl ChainMdp {
    pub fn new(seed: u64) -> Self {
        Self {
            state: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Environment for ChainMdp {
    fn state_count(&self) -> usize {
        STATES
    }

    fn action_count(&self) -> usize {
        ACTIONS
    }

    fn agent_count(&self) -> usize {
        1
    }

    fn feature_len(&self) -> usize {
        STATES
    }

    fn encode(&self, state: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        out[state] = 1.0;
    }

    fn reset(&mut self, _episode: usize) {
        self.state = self.rng.gen_range(0..STATES);
    }

    fn pending(&self) -> Vec<(usize, usize)> {
        vec![(0, self.state)]
    }

    fn step(&mut self, actions: &[(usize, usize)]) -> Result<Vec<AgentStep>> {
        let &[(agent, action)] = actions else {
            return Err(Error::Contract(
                "chain MDP expects exactly one action".into(),
            ));
        };
        if action >= ACTIONS {
            return Err(Error::Contract(format!("action {action} out of range")));
        }
        let (next, reward) = TRANSITIONS[self.state][action];
        let step = AgentStep {
            agent,
            state: self.state,
            action,
            reward,
            next_state: next,
            terminal: false,
        };
        self.state = next;
        Ok(vec![step])
    }
}

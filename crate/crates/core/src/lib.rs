//! Co-simulation of autonomous vehicles on a two-lane corridor served by
//! sub-6GHz and THz base stations, with Q-learning agents that pick both a
//! driving action and a serving station.

// Validation is written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod channel;
pub mod env;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod road;

pub use error::{Error, Result};

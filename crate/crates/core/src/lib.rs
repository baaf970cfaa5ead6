//! Two-policy switching with goal-reaching certificates.
//!
//! A reward-seeking base policy and a certified alternative policy are fused
//! into one non-stationary policy that picks between them from their
//! critics' relative value improvements, under a summable acceptance
//! schedule. The crate computes the closed-form quantities behind the fused
//! policy's guarantees (spatial bounds, overshoot bound, reaching-time
//! distribution, exponential lower bound) and ships a Monte Carlo harness
//! that verifies each probabilistic claim against its prediction on
//! analytically tractable environments.

pub mod bounds;
pub mod config;
pub mod critics;
pub mod env;
pub mod fusion;
pub mod kl;
pub mod montecarlo;
pub mod policies;
pub mod rngs;
pub mod rollout;
pub mod schedule;
pub mod state;
pub mod stats;
pub mod trace;

pub use state::{Action, Norm, State};

/// Stable identifier stamped into every serialized report.
pub const SCHEMA_VERSION: &str = "1";

//! Markov decision process interface and goal-set geometry.
//!
//! An environment exposes sampling of initial states and transitions, a
//! reward, and a transition envelope: an almost-sure upper bound on the norm
//! of the next state given the current state and action. Every shipped
//! environment documents its envelope in closed form so the spatial-bound
//! computations have something evaluable to extremize.

use rand::RngCore;
use thiserror::Error;

use crate::state::{Action, Norm, State};

mod chain;
mod double_integrator;
mod scalar;

pub use chain::{ChainSpec, FiniteChainEnv};
pub use double_integrator::NoisyDoubleIntegratorEnv;
pub use scalar::ContractiveScalarEnv;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("action kind does not match environment (got {got}, expected {expected})")]
    ActionKindMismatch {
        got: &'static str,
        expected: &'static str,
    },
    #[error("transition produced a non-finite state: {state}")]
    NonFiniteState { state: String },
    #[error("invalid chain specification: {0}")]
    InvalidChain(String),
}

/// A compact target region. `goal_dist` is the distance from a state to the
/// set under the environment norm; it is zero exactly on the set.
#[derive(Debug, Clone)]
pub enum GoalSet {
    /// `{ s : ||s|| <= radius }` under the given norm.
    NormBall { radius: f64, norm: Norm },
    /// Centered box `{ s : |s_i| <= half_widths[i] }`; distance measured in
    /// the given norm via per-axis excess.
    CenteredBox { half_widths: Vec<f64>, norm: Norm },
    /// A designated subset of integer-embedded chain states.
    StateSubset { members: Vec<usize> },
}

impl GoalSet {
    pub fn norm(&self) -> Norm {
        match self {
            GoalSet::NormBall { norm, .. } => *norm,
            GoalSet::CenteredBox { norm, .. } => *norm,
            GoalSet::StateSubset { .. } => Norm::Sup,
        }
    }

    /// Distance to the goal set; exact closed form for each variant.
    pub fn goal_dist(&self, s: &State) -> f64 {
        match self {
            GoalSet::NormBall { radius, norm } => (norm.state_norm(s) - radius).max(0.0),
            GoalSet::CenteredBox { half_widths, norm } => {
                let excess: Vec<f64> = s
                    .coords()
                    .iter()
                    .zip(half_widths)
                    .map(|(c, w)| (c.abs() - w).max(0.0))
                    .collect();
                norm.of(&excess)
            }
            GoalSet::StateSubset { members } => {
                let x = s.as_scalar();
                members
                    .iter()
                    .map(|&m| (x - m as f64).abs())
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    pub fn contains(&self, s: &State) -> bool {
        self.goal_dist(s) == 0.0
    }

    /// Axis-aligned bounding box of the sublevel region
    /// `{ s : goal_dist(s) <= d }`, or `None` when no bounded box exists.
    pub fn sublevel_box(&self, d: f64, dim: usize) -> Option<Vec<(f64, f64)>> {
        match self {
            GoalSet::NormBall { radius, .. } => {
                let r = radius + d;
                Some(vec![(-r, r); dim])
            }
            GoalSet::CenteredBox { half_widths, .. } => Some(
                half_widths
                    .iter()
                    .map(|w| (-(w + d), w + d))
                    .collect(),
            ),
            GoalSet::StateSubset { members } => {
                let lo = members.iter().copied().fold(f64::INFINITY, |m, v| m.min(v as f64));
                let hi = members
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, |m, v| m.max(v as f64));
                Some(vec![(lo - d, hi + d)])
            }
        }
    }
}

/// Geometry of the state space, used by grid extremization.
#[derive(Debug, Clone)]
pub enum StateSpace {
    /// A region of R^dim.
    Continuous { dim: usize },
    /// An explicit finite set of states.
    Finite { states: Vec<State> },
}

/// Geometry of the action set; compact by assumption.
#[derive(Debug, Clone)]
pub enum ActionSpace {
    /// Interval box `[lo_i, hi_i]`.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// `0..count` discrete actions.
    Finite { count: usize },
}

/// The MDP interface: initial-state law, transition sampling, reward, and
/// the documented transition envelope.
pub trait Mdp: Send + Sync {
    fn state_dim(&self) -> usize;
    fn norm(&self) -> Norm;
    fn goal(&self) -> &GoalSet;

    /// Draw from the native initial-state distribution.
    fn sample_initial(&self, rng: &mut dyn RngCore) -> State;

    /// Draw an initial state uniformly from `{ s : goal_dist(s) <= d_circ }`.
    fn sample_initial_within(&self, d_circ: f64, rng: &mut dyn RngCore) -> State;

    fn sample_transition(
        &self,
        s: &State,
        a: &Action,
        rng: &mut dyn RngCore,
    ) -> Result<State, EnvError>;

    fn reward(&self, s: &State, a: &Action) -> f64;

    /// Almost-sure upper bound on `||S'||` after taking `a` in `s`.
    fn envelope(&self, s: &State, a: &Action) -> f64;

    fn state_space(&self) -> StateSpace;
    fn action_space(&self) -> ActionSpace;

    /// Lipschitz modulus of the envelope on bounded regions, used to
    /// document grid-extremization error.
    fn envelope_lipschitz(&self) -> f64;

    fn goal_dist(&self, s: &State) -> f64 {
        self.goal().goal_dist(s)
    }
}

/// Uniform draw on `[lo, hi]`.
pub(crate) fn uniform_in(rng: &mut dyn RngCore, lo: f64, hi: f64) -> f64 {
    use rand::Rng;
    rng.random_range(lo..=hi)
}

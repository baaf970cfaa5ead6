//! One-dimensional environment with bounded uniform noise.
//!
//! Dynamics: `S' = a + W` with `W ~ Uniform[-w_max, w_max]` and actions
//! clamped to `[-a_max, a_max]`. Envelope: `|S'| <= |a| + w_max` surely,
//! so `envelope(s, a) = |a| + w_max` (piecewise linear, continuous).
//!
//! With the proportional policy `a = c*s` (`c` in (0,1)) and a goal radius
//! `g > w_max / (1 - c)`, one step gives
//! `|S'| <= c|s| + w_max` and `c*g + w_max < g`, hence
//! `goal_dist(S') <= c * goal_dist(S)` surely: the policy contracts the
//! goal distance at rate `c` regardless of the noise draw.

use rand::RngCore;

use super::{uniform_in, ActionSpace, EnvError, GoalSet, Mdp, StateSpace};
use crate::state::{clamp, Action, Norm, State};

#[derive(Debug, Clone)]
pub struct ContractiveScalarEnv {
    pub w_max: f64,
    pub goal_radius: f64,
    pub a_max: f64,
    goal: GoalSet,
}

impl ContractiveScalarEnv {
    /// `w_max > 0` and `goal_radius > w_max` so the goal absorbs the noise
    /// under any action aimed at the origin.
    pub fn new(w_max: f64, goal_radius: f64, a_max: f64) -> Result<Self, EnvError> {
        if !(w_max > 0.0 && w_max.is_finite()) {
            return Err(EnvError::InvalidChain(format!(
                "w_max must be positive and finite, got {w_max}"
            )));
        }
        if !(goal_radius > w_max) {
            return Err(EnvError::InvalidChain(format!(
                "goal_radius ({goal_radius}) must exceed w_max ({w_max})"
            )));
        }
        if !(a_max > 0.0 && a_max.is_finite()) {
            return Err(EnvError::InvalidChain(format!(
                "a_max must be positive and finite, got {a_max}"
            )));
        }
        Ok(ContractiveScalarEnv {
            w_max,
            goal_radius,
            a_max,
            goal: GoalSet::NormBall {
                radius: goal_radius,
                norm: Norm::Sup,
            },
        })
    }

    pub fn clamp_action(&self, a: f64) -> f64 {
        clamp(a, -self.a_max, self.a_max)
    }

    fn action_value(&self, a: &Action) -> Result<f64, EnvError> {
        match a.continuous() {
            Some(c) if c.len() == 1 => Ok(self.clamp_action(c[0])),
            _ => Err(EnvError::ActionKindMismatch {
                got: "discrete",
                expected: "continuous scalar",
            }),
        }
    }
}

impl Mdp for ContractiveScalarEnv {
    fn state_dim(&self) -> usize {
        1
    }

    fn norm(&self) -> Norm {
        Norm::Sup
    }

    fn goal(&self) -> &GoalSet {
        &self.goal
    }

    fn sample_initial(&self, rng: &mut dyn RngCore) -> State {
        State::scalar(uniform_in(rng, -1.0, 1.0))
    }

    fn sample_initial_within(&self, d_circ: f64, rng: &mut dyn RngCore) -> State {
        let r = self.goal_radius + d_circ;
        State::scalar(uniform_in(rng, -r, r))
    }

    fn sample_transition(
        &self,
        _s: &State,
        a: &Action,
        rng: &mut dyn RngCore,
    ) -> Result<State, EnvError> {
        let a = self.action_value(a)?;
        let w = uniform_in(rng, -self.w_max, self.w_max);
        Ok(State::scalar(a + w))
    }

    fn reward(&self, s: &State, _a: &Action) -> f64 {
        -self.goal.goal_dist(s)
    }

    fn envelope(&self, _s: &State, a: &Action) -> f64 {
        let a = match a.continuous() {
            Some(c) if c.len() == 1 => self.clamp_action(c[0]),
            _ => panic!("scalar environment envelope requires a continuous scalar action"),
        };
        a.abs() + self.w_max
    }

    fn state_space(&self) -> StateSpace {
        StateSpace::Continuous { dim: 1 }
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Box {
            lo: vec![-self.a_max],
            hi: vec![self.a_max],
        }
    }

    fn envelope_lipschitz(&self) -> f64 {
        1.0
    }
}

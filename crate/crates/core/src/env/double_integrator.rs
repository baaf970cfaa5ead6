//! Discrete-time double integrator with bounded actuation noise.
//!
//! State `(x, v)`, dynamics
//! `x' = x + dt*v`, `v' = v + dt*clamp(a, +-a_max) + W`,
//! `W ~ Uniform[-w_max, w_max]`. The goal is a sup-norm ball of radius `g`.
//!
//! Envelope under the sup norm: the position update is deterministic and the
//! velocity update is noisy, so
//! `||S'||_sup <= max(|x + dt*v|, |v + dt*clamp(a)| + w_max)` surely.
//! Both branches are piecewise linear in `(x, v, a)`, hence the envelope is
//! continuous with Lipschitz modulus at most `1 + dt`.

use rand::RngCore;

use super::{uniform_in, ActionSpace, EnvError, GoalSet, Mdp, StateSpace};
use crate::state::{clamp, Action, Norm, State};

#[derive(Debug, Clone)]
pub struct NoisyDoubleIntegratorEnv {
    pub dt: f64,
    pub w_max: f64,
    pub a_max: f64,
    pub goal_radius: f64,
    goal: GoalSet,
}

impl NoisyDoubleIntegratorEnv {
    pub fn new(dt: f64, w_max: f64, a_max: f64, goal_radius: f64) -> Result<Self, EnvError> {
        if !(dt > 0.0 && w_max > 0.0 && a_max > 0.0 && goal_radius > 0.0) {
            return Err(EnvError::InvalidChain(format!(
                "double integrator parameters must be positive \
                 (dt={dt}, w_max={w_max}, a_max={a_max}, goal_radius={goal_radius})"
            )));
        }
        Ok(NoisyDoubleIntegratorEnv {
            dt,
            w_max,
            a_max,
            goal_radius,
            goal: GoalSet::NormBall {
                radius: goal_radius,
                norm: Norm::Sup,
            },
        })
    }

    fn action_value(&self, a: &Action) -> Result<f64, EnvError> {
        match a.continuous() {
            Some(c) if c.len() == 1 => Ok(clamp(c[0], -self.a_max, self.a_max)),
            _ => Err(EnvError::ActionKindMismatch {
                got: "discrete",
                expected: "continuous scalar",
            }),
        }
    }
}

impl Mdp for NoisyDoubleIntegratorEnv {
    fn state_dim(&self) -> usize {
        2
    }

    fn norm(&self) -> Norm {
        Norm::Sup
    }

    fn goal(&self) -> &GoalSet {
        &self.goal
    }

    fn sample_initial(&self, rng: &mut dyn RngCore) -> State {
        State::pair(uniform_in(rng, -1.0, 1.0), uniform_in(rng, -1.0, 1.0))
    }

    fn sample_initial_within(&self, d_circ: f64, rng: &mut dyn RngCore) -> State {
        let r = self.goal_radius + d_circ;
        State::pair(uniform_in(rng, -r, r), uniform_in(rng, -r, r))
    }

    fn sample_transition(
        &self,
        s: &State,
        a: &Action,
        rng: &mut dyn RngCore,
    ) -> Result<State, EnvError> {
        let a = self.action_value(a)?;
        let (x, v) = (s.coords()[0], s.coords()[1]);
        let w = uniform_in(rng, -self.w_max, self.w_max);
        Ok(State::pair(x + self.dt * v, v + self.dt * a + w))
    }

    fn reward(&self, s: &State, _a: &Action) -> f64 {
        -self.goal.goal_dist(s)
    }

    fn envelope(&self, s: &State, a: &Action) -> f64 {
        let a = match a.continuous() {
            Some(c) if c.len() == 1 => clamp(c[0], -self.a_max, self.a_max),
            _ => panic!("double integrator envelope requires a continuous scalar action"),
        };
        let (x, v) = (s.coords()[0], s.coords()[1]);
        (x + self.dt * v).abs().max((v + self.dt * a).abs() + self.w_max)
    }

    fn state_space(&self) -> StateSpace {
        StateSpace::Continuous { dim: 2 }
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Box {
            lo: vec![-self.a_max],
            hi: vec![self.a_max],
        }
    }

    fn envelope_lipschitz(&self) -> f64 {
        1.0 + self.dt
    }
}

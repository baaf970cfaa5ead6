//! Finite chain environment over an explicit transition tensor.
//!
//! States are embedded at the integers `0..n_states`, which makes the norm
//! machinery and goal distances of the continuous environments apply
//! unchanged. The tensor is explicit, so exact value iteration and exact
//! policy evaluation are available as critic oracles.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{uniform_in, ActionSpace, EnvError, GoalSet, Mdp, StateSpace};
use crate::state::{Action, Norm, State};

pub const MAX_CHAIN_STATES: usize = 32;

/// On-disk description of a chain: row-major transition tensor with
/// probabilities as decimals, rewards, and the goal subset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainSpec {
    pub n_states: usize,
    pub n_actions: usize,
    /// Row-major `[state][action][next_state]`, length `n*m*n`.
    pub transition: Vec<f64>,
    /// Length `n` (per state, replicated across actions) or `n*m`
    /// (per state-action pair).
    pub rewards: Vec<f64>,
    pub goal_states: Vec<usize>,
}

impl ChainSpec {
    pub fn from_json(text: &str) -> Result<Self, EnvError> {
        serde_json::from_str(text).map_err(|e| EnvError::InvalidChain(e.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct FiniteChainEnv {
    n_states: usize,
    n_actions: usize,
    tensor: Vec<f64>,
    /// Per-(state, action) cumulative row sums, for categorical sampling.
    cumulative: Vec<f64>,
    rewards: Vec<f64>,
    goal: GoalSet,
}

impl FiniteChainEnv {
    pub fn from_spec(spec: &ChainSpec) -> Result<Self, EnvError> {
        let (n, m) = (spec.n_states, spec.n_actions);
        if n == 0 || n > MAX_CHAIN_STATES {
            return Err(EnvError::InvalidChain(format!(
                "n_states must be in 1..={MAX_CHAIN_STATES}, got {n}"
            )));
        }
        if m == 0 {
            return Err(EnvError::InvalidChain("n_actions must be positive".into()));
        }
        if spec.transition.len() != n * m * n {
            return Err(EnvError::InvalidChain(format!(
                "transition tensor must have n*m*n = {} entries, got {}",
                n * m * n,
                spec.transition.len()
            )));
        }
        let rewards = if spec.rewards.len() == n {
            let mut r = Vec::with_capacity(n * m);
            for &reward in &spec.rewards {
                r.extend(std::iter::repeat_n(reward, m));
            }
            r
        } else if spec.rewards.len() == n * m {
            spec.rewards.clone()
        } else {
            return Err(EnvError::InvalidChain(format!(
                "rewards must have n = {n} or n*m = {} entries, got {}",
                n * m,
                spec.rewards.len()
            )));
        };
        if spec.goal_states.is_empty() {
            return Err(EnvError::InvalidChain("goal_states must be non-empty".into()));
        }
        for &g in &spec.goal_states {
            if g >= n {
                return Err(EnvError::InvalidChain(format!(
                    "goal state {g} out of range 0..{n}"
                )));
            }
        }
        // Stochastic-matrix check: rows sum to 1 within 1e-12.
        let mut cumulative = vec![0.0; n * m * n];
        for i in 0..n {
            for k in 0..m {
                let row = &spec.transition[(i * m + k) * n..(i * m + k + 1) * n];
                let mut acc = 0.0;
                for (j, &p) in row.iter().enumerate() {
                    if !(0.0..=1.0).contains(&p) {
                        return Err(EnvError::InvalidChain(format!(
                            "transition[{i}][{k}][{j}] = {p} is not a probability"
                        )));
                    }
                    acc += p;
                    cumulative[(i * m + k) * n + j] = acc;
                }
                if (acc - 1.0).abs() > 1e-12 {
                    return Err(EnvError::InvalidChain(format!(
                        "row ({i}, {k}) sums to {acc}, expected 1 within 1e-12"
                    )));
                }
            }
        }
        Ok(FiniteChainEnv {
            n_states: n,
            n_actions: m,
            tensor: spec.transition.clone(),
            cumulative,
            rewards,
            goal: GoalSet::StateSubset {
                members: spec.goal_states.clone(),
            },
        })
    }

    /// Default eight-state chain used throughout the test harness.
    ///
    /// Goal at state 0 with the highest reward; a decoy reward peak at state
    /// 7 and a secondary bump at state 2. `left` (action 0) and `stay`
    /// (action 1) are deterministic; `right` (action 2) is noisy. A
    /// reward-greedy policy therefore drifts away from the goal in the
    /// region {5, 6, 7} and hovers near the bump in {1, 2, 3}, while the
    /// leftward policy walks to the goal one state per step, surely.
    pub fn default_eight_state() -> Self {
        let n = 8;
        let m = 3;
        // Discounted values under gamma <= 0.9 stay within (0, 1). The bump
        // at state 2 is high enough that the base policy's relative
        // improvement beats the leftward policy's there, so holding the bump
        // for a step is both selected and value-positive.
        let rewards = vec![0.099, 0.03, 0.095, 0.05, 0.02, 0.02, 0.03, 0.099];
        let mut transition = vec![0.0; n * m * n];
        let mut set = |i: usize, k: usize, j: usize, p: f64| {
            transition[(i * m + k) * n + j] += p;
        };
        for i in 0..n {
            let left = i.saturating_sub(1);
            let right = (i + 1).min(n - 1);
            set(i, 0, left, 1.0);
            set(i, 1, i, 1.0);
            set(i, 2, right, 0.85);
            set(i, 2, i, 0.10);
            set(i, 2, left, 0.05);
        }
        let spec = ChainSpec {
            n_states: n,
            n_actions: m,
            transition,
            rewards,
            goal_states: vec![0],
        };
        FiniteChainEnv::from_spec(&spec).expect("built-in chain is valid")
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn transition_prob(&self, i: usize, action: usize, j: usize) -> f64 {
        self.tensor[(i * self.n_actions + action) * self.n_states + j]
    }

    /// Exact one-step law of the next state.
    pub fn one_step_distribution(&self, i: usize, action: usize) -> &[f64] {
        let m = self.n_actions;
        let n = self.n_states;
        &self.tensor[(i * m + action) * n..(i * m + action + 1) * n]
    }

    pub fn reward_at(&self, i: usize, action: usize) -> f64 {
        self.rewards[i * self.n_actions + action]
    }

    pub fn states(&self) -> Vec<State> {
        (0..self.n_states).map(State::index).collect()
    }

    fn action_index(&self, a: &Action) -> Result<usize, EnvError> {
        match a.discrete() {
            Some(k) if k < self.n_actions => Ok(k),
            Some(k) => Err(EnvError::InvalidChain(format!(
                "action index {k} out of range 0..{}",
                self.n_actions
            ))),
            None => Err(EnvError::ActionKindMismatch {
                got: "continuous",
                expected: "discrete",
            }),
        }
    }
}

impl Mdp for FiniteChainEnv {
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
        let u = uniform_in(rng, 0.0, 1.0);
        let i = ((u * self.n_states as f64) as usize).min(self.n_states - 1);
        State::index(i)
    }

    fn sample_initial_within(&self, d_circ: f64, rng: &mut dyn RngCore) -> State {
        let eligible: Vec<usize> = (0..self.n_states)
            .filter(|&i| self.goal.goal_dist(&State::index(i)) <= d_circ)
            .collect();
        let u = uniform_in(rng, 0.0, 1.0);
        let pick = ((u * eligible.len() as f64) as usize).min(eligible.len() - 1);
        State::index(eligible[pick])
    }

    fn sample_transition(
        &self,
        s: &State,
        a: &Action,
        rng: &mut dyn RngCore,
    ) -> Result<State, EnvError> {
        let i = s.chain_index(self.n_states);
        let k = self.action_index(a)?;
        let m = self.n_actions;
        let n = self.n_states;
        let cum = &self.cumulative[(i * m + k) * n..(i * m + k + 1) * n];
        let u = uniform_in(rng, 0.0, 1.0);
        let j = cum.iter().position(|&c| u < c).unwrap_or(n - 1);
        Ok(State::index(j))
    }

    fn reward(&self, s: &State, a: &Action) -> f64 {
        let i = s.chain_index(self.n_states);
        let k = a
            .discrete()
            .expect("chain environment reward requires a discrete action");
        self.rewards[i * self.n_actions + k]
    }

    fn envelope(&self, s: &State, a: &Action) -> f64 {
        let i = s.chain_index(self.n_states);
        let k = a
            .discrete()
            .expect("chain environment envelope requires a discrete action");
        // Exact: the largest embedded norm among reachable next states.
        self.one_step_distribution(i, k)
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(j, _)| j as f64)
            .fold(0.0, f64::max)
    }

    fn state_space(&self) -> StateSpace {
        StateSpace::Finite {
            states: self.states(),
        }
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Finite {
            count: self.n_actions,
        }
    }

    fn envelope_lipschitz(&self) -> f64 {
        // Finite spaces are enumerated exactly; no grid error.
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rngs::{substream, StreamPurpose};

    #[test]
    fn default_chain_rows_sum_to_one() {
        let env = FiniteChainEnv::default_eight_state();
        for i in 0..env.n_states() {
            for k in 0..env.n_actions() {
                let sum: f64 = env.one_step_distribution(i, k).iter().sum();
                assert!((sum - 1.0).abs() <= 1e-12, "row ({i},{k}) sums to {sum}");
            }
        }
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        let spec = ChainSpec {
            n_states: 2,
            n_actions: 1,
            transition: vec![0.5, 0.4, 0.0, 1.0],
            rewards: vec![0.0, 0.0],
            goal_states: vec![0],
        };
        assert!(FiniteChainEnv::from_spec(&spec).is_err());
    }

    #[test]
    fn left_action_is_deterministic_toward_goal() {
        let env = FiniteChainEnv::default_eight_state();
        let mut rng = substream(5, 0, StreamPurpose::EnvNoise);
        for i in 1..8 {
            let next = env
                .sample_transition(&State::index(i), &Action::Discrete(0), &mut rng)
                .unwrap();
            assert_eq!(next.chain_index(8), i - 1);
        }
        // Goal state is absorbing under `left`.
        let next = env
            .sample_transition(&State::index(0), &Action::Discrete(0), &mut rng)
            .unwrap();
        assert_eq!(next.chain_index(8), 0);
    }

    #[test]
    fn envelope_is_max_reachable_state() {
        let env = FiniteChainEnv::default_eight_state();
        assert_eq!(env.envelope(&State::index(3), &Action::Discrete(2)), 4.0);
        assert_eq!(env.envelope(&State::index(3), &Action::Discrete(0)), 2.0);
        assert_eq!(env.envelope(&State::index(7), &Action::Discrete(2)), 7.0);
    }

    #[test]
    fn spec_round_trips_through_json() {
        let env = FiniteChainEnv::default_eight_state();
        let spec = ChainSpec {
            n_states: 8,
            n_actions: 3,
            transition: env.tensor.clone(),
            rewards: env.rewards.clone(),
            goal_states: vec![0],
        };
        let text = serde_json::to_string(&spec).unwrap();
        let parsed = ChainSpec::from_json(&text).unwrap();
        let rebuilt = FiniteChainEnv::from_spec(&parsed).unwrap();
        assert_eq!(rebuilt.tensor, env.tensor);
    }
}

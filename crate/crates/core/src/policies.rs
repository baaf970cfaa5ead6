//! Stationary policies.
//!
//! Policies are immutable after construction and safe to share across
//! parallel rollouts; all randomness comes from the caller-provided stream.

use rand::{Rng, RngCore};

use crate::env::{FiniteChainEnv, Mdp};
use crate::state::{clamp, Action, State};

pub trait StationaryPolicy: Send + Sync {
    fn sample(&self, s: &State, rng: &mut dyn RngCore) -> Action;
}

/// `a = clamp(gain * s)`: contracts toward the origin for `gain` in (0,1).
#[derive(Debug, Clone)]
pub struct ProportionalPolicy {
    pub gain: f64,
    pub a_max: f64,
}

impl StationaryPolicy for ProportionalPolicy {
    fn sample(&self, s: &State, _rng: &mut dyn RngCore) -> Action {
        Action::scalar(clamp(self.gain * s.as_scalar(), -self.a_max, self.a_max))
    }
}

/// Aims one `drift` further from the origin than the current state, clamped
/// to the action set. Repels from the goal while `|s| < a_max` and attracts
/// to `|s| ~ a_max` outside: suboptimal but bounded.
#[derive(Debug, Clone)]
pub struct OutwardDriftPolicy {
    pub drift: f64,
    pub a_max: f64,
}

impl StationaryPolicy for OutwardDriftPolicy {
    fn sample(&self, s: &State, _rng: &mut dyn RngCore) -> Action {
        let x = s.as_scalar();
        let sign = if x < 0.0 { -1.0 } else { 1.0 };
        Action::scalar(clamp(sign * (x.abs() + self.drift), -self.a_max, self.a_max))
    }
}

/// Always acts with zero input.
#[derive(Debug, Clone)]
pub struct ZeroPolicy;

impl StationaryPolicy for ZeroPolicy {
    fn sample(&self, _s: &State, _rng: &mut dyn RngCore) -> Action {
        Action::scalar(0.0)
    }
}

/// PD feedback `a = clamp(-kx*x - kv*v)` for the double integrator.
#[derive(Debug, Clone)]
pub struct PdPolicy {
    pub kx: f64,
    pub kv: f64,
    pub a_max: f64,
}

impl StationaryPolicy for PdPolicy {
    fn sample(&self, s: &State, _rng: &mut dyn RngCore) -> Action {
        let (x, v) = (s.coords()[0], s.coords()[1]);
        Action::scalar(clamp(-self.kx * x - self.kv * v, -self.a_max, self.a_max))
    }
}

/// A policy over a finite chain: one action distribution per state.
#[derive(Debug, Clone)]
pub struct ChainPolicy {
    /// `probs[state][action]`, each row a probability vector.
    probs: Vec<Vec<f64>>,
}

impl ChainPolicy {
    pub fn from_probs(probs: Vec<Vec<f64>>) -> Result<Self, String> {
        for (i, row) in probs.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 || row.iter().any(|&p| p < 0.0) {
                return Err(format!("policy row {i} is not a probability vector"));
            }
        }
        Ok(ChainPolicy { probs })
    }

    /// Deterministic policy given by one action index per state.
    pub fn deterministic(actions: &[usize], n_actions: usize) -> Self {
        let probs = actions
            .iter()
            .map(|&a| {
                let mut row = vec![0.0; n_actions];
                row[a] = 1.0;
                row
            })
            .collect();
        ChainPolicy { probs }
    }

    /// Reward-greedy one-step lookahead: in each state pick the action with
    /// the largest expected immediate reward of the next state, breaking
    /// ties toward the higher action index.
    pub fn reward_lookahead_greedy(env: &FiniteChainEnv) -> Self {
        let n = env.n_states();
        let m = env.n_actions();
        let state_reward = |j: usize| env.reward_at(j, 0);
        let mut actions = Vec::with_capacity(n);
        for i in 0..n {
            let mut best = 0;
            let mut best_value = f64::NEG_INFINITY;
            for k in 0..m {
                let expected: f64 = env
                    .one_step_distribution(i, k)
                    .iter()
                    .enumerate()
                    .map(|(j, &p)| p * state_reward(j))
                    .sum();
                if expected >= best_value {
                    best_value = expected;
                    best = k;
                }
            }
            actions.push(best);
        }
        ChainPolicy::deterministic(&actions, m)
    }

    /// In every state, take the action that steps toward the nearest goal
    /// state; goal states take an action that keeps them inside the goal.
    /// Actions are found by inspecting the transition tensor, so the policy
    /// is independent of how a particular chain orders its action set.
    pub fn toward_goal(env: &FiniteChainEnv) -> Self {
        let n = env.n_states();
        let m = env.n_actions();
        let goal = env.goal();
        let row_mass_on = |i: usize, k: usize, pred: &dyn Fn(usize) -> bool| -> f64 {
            env.one_step_distribution(i, k)
                .iter()
                .enumerate()
                .filter(|&(j, _)| pred(j))
                .map(|(_, &p)| p)
                .sum()
        };
        let mut actions = Vec::with_capacity(n);
        for i in 0..n {
            let s = State::index(i);
            let wanted: Box<dyn Fn(usize) -> bool> = if goal.contains(&s) {
                Box::new(move |j| goal.contains(&State::index(j)))
            } else {
                let nearest = (0..n)
                    .filter(|&j| goal.contains(&State::index(j)))
                    .min_by(|&a, &b| {
                        let da = (a as f64 - i as f64).abs();
                        let db = (b as f64 - i as f64).abs();
                        da.partial_cmp(&db).unwrap()
                    })
                    .expect("goal set is non-empty");
                let target = if nearest < i { i - 1 } else { i + 1 };
                Box::new(move |j| j == target)
            };
            // Prefer an action with full mass on the wanted states; fall
            // back to the best available one (certification re-checks it).
            let best = (0..m)
                .max_by(|&a, &b| {
                    row_mass_on(i, a, wanted.as_ref())
                        .partial_cmp(&row_mass_on(i, b, wanted.as_ref()))
                        .unwrap()
                })
                .expect("chain has at least one action");
            actions.push(best);
        }
        ChainPolicy::deterministic(&actions, m)
    }

    pub fn n_states(&self) -> usize {
        self.probs.len()
    }

    /// Exact action distribution in a state, for tabular policy evaluation.
    pub fn action_probs(&self, state_index: usize) -> &[f64] {
        &self.probs[state_index]
    }
}

impl StationaryPolicy for ChainPolicy {
    fn sample(&self, s: &State, rng: &mut dyn RngCore) -> Action {
        let i = s.chain_index(self.probs.len());
        let row = &self.probs[i];
        let u: f64 = rng.random_range(0.0..1.0);
        let mut acc = 0.0;
        for (k, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return Action::Discrete(k);
            }
        }
        Action::Discrete(row.len() - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rngs::{substream, StreamPurpose};

    #[test]
    fn proportional_policy_clamps() {
        let p = ProportionalPolicy { gain: 0.5, a_max: 1.0 };
        let mut rng = substream(0, 0, StreamPurpose::AltAction);
        assert_eq!(p.sample(&State::scalar(10.0), &mut rng), Action::scalar(1.0));
        assert_eq!(p.sample(&State::scalar(1.0), &mut rng), Action::scalar(0.5));
    }

    #[test]
    fn outward_drift_repels_inside_and_caps_outside() {
        let p = OutwardDriftPolicy { drift: 0.5, a_max: 1.0 };
        let mut rng = substream(0, 0, StreamPurpose::BaseAction);
        assert_eq!(p.sample(&State::scalar(0.2), &mut rng), Action::scalar(0.7));
        assert_eq!(p.sample(&State::scalar(-0.2), &mut rng), Action::scalar(-0.7));
        assert_eq!(p.sample(&State::scalar(3.0), &mut rng), Action::scalar(1.0));
    }

    #[test]
    fn greedy_chain_policy_drifts_to_decoy_and_bump() {
        let env = FiniteChainEnv::default_eight_state();
        let p = ChainPolicy::reward_lookahead_greedy(&env);
        let mut rng = substream(0, 0, StreamPurpose::BaseAction);
        // Near the decoy peak at 7, greedy moves right (away from the goal).
        assert_eq!(p.sample(&State::index(6), &mut rng), Action::Discrete(2));
        // Near the bump at 2, greedy moves toward it.
        assert_eq!(p.sample(&State::index(3), &mut rng), Action::Discrete(0));
    }

    #[test]
    fn toward_goal_policy_steps_left_and_holds_goal() {
        let env = FiniteChainEnv::default_eight_state();
        let p = ChainPolicy::toward_goal(&env);
        let mut rng = substream(0, 0, StreamPurpose::AltAction);
        for i in 1..8 {
            assert_eq!(p.sample(&State::index(i), &mut rng), Action::Discrete(0));
        }
        assert_eq!(p.sample(&State::index(0), &mut rng), Action::Discrete(1));
    }

    #[test]
    fn chain_policy_samples_follow_row_distribution() {
        let p = ChainPolicy::from_probs(vec![vec![0.25, 0.5, 0.25]]).unwrap();
        let mut rng = substream(9, 0, StreamPurpose::BaseAction);
        let mut counts = [0usize; 3];
        let n = 40_000;
        for _ in 0..n {
            if let Action::Discrete(k) = p.sample(&State::index(0), &mut rng) {
                counts[k] += 1;
            }
        }
        for (k, &expected) in [0.25, 0.5, 0.25].iter().enumerate() {
            let freq = counts[k] as f64 / n as f64;
            let sigma = (expected * (1.0 - expected) / n as f64).sqrt();
            assert!(
                (freq - expected).abs() <= 4.0 * sigma,
                "action {k}: freq {freq} vs {expected}"
            );
        }
    }
}

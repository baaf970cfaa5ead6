//! Environment soundness: the transition envelope bounds every sampled
//! next state, and the certified scalar policy contracts the goal distance
//! at every single step.

use policy_fusion::env::{ContractiveScalarEnv, FiniteChainEnv, Mdp, NoisyDoubleIntegratorEnv};
use policy_fusion::kl::make_scalar_certified_policy;
use policy_fusion::rngs::{substream, RolloutStreams, StreamPurpose};
use policy_fusion::state::{Action, State};
use rand::Rng;

#[test]
fn scalar_envelope_sound_over_a_million_samples() {
    let env = ContractiveScalarEnv::new(0.1, 0.2, 1.0).unwrap();
    let mut rng = substream(101, 0, StreamPurpose::EnvNoise);
    let mut violations = 0usize;
    for _ in 0..1_000_000 {
        let s = State::scalar(rng.random_range(-10.0..10.0));
        let a = Action::scalar(rng.random_range(-3.0..3.0));
        let next = env.sample_transition(&s, &a, &mut rng).unwrap();
        if env.norm().state_norm(&next) > env.envelope(&s, &a) {
            violations += 1;
        }
    }
    assert_eq!(violations, 0);
}

#[test]
fn double_integrator_envelope_sound_over_a_million_samples() {
    let env = NoisyDoubleIntegratorEnv::new(0.1, 0.05, 1.0, 0.2).unwrap();
    let mut rng = substream(102, 0, StreamPurpose::EnvNoise);
    let mut violations = 0usize;
    for _ in 0..1_000_000 {
        let s = State::pair(rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0));
        let a = Action::scalar(rng.random_range(-3.0..3.0));
        let next = env.sample_transition(&s, &a, &mut rng).unwrap();
        if env.norm().state_norm(&next) > env.envelope(&s, &a) {
            violations += 1;
        }
    }
    assert_eq!(violations, 0);
}

#[test]
fn chain_envelope_sound_over_a_million_samples() {
    let env = FiniteChainEnv::default_eight_state();
    let mut rng = substream(103, 0, StreamPurpose::EnvNoise);
    let mut violations = 0usize;
    for i in 0..1_000_000u64 {
        let s = State::index((i % 8) as usize);
        let a = Action::Discrete((i % 3) as usize);
        let next = env.sample_transition(&s, &a, &mut rng).unwrap();
        if env.norm().state_norm(&next) > env.envelope(&s, &a) {
            violations += 1;
        }
    }
    assert_eq!(violations, 0);
}

#[test]
fn certified_policy_contracts_goal_distance_every_step() {
    // goal_dist(S_{t+1}) <= c * goal_dist(S_t) surely: asserted per step on
    // 10^4 seeded rollouts from the whole start region.
    let env = ContractiveScalarEnv::new(0.1, 0.2, 1.0).unwrap();
    let c = (-1.0f64).exp();
    let certified = make_scalar_certified_policy(c, &env).unwrap();
    for seed in 0..10_000u64 {
        let mut streams = RolloutStreams::derive(777, seed);
        let mut s = env.sample_initial_within(10.0, &mut streams.init_state);
        for _ in 0..40 {
            let d = env.goal_dist(&s);
            let a = certified.policy.sample(&s, &mut streams.alt_action);
            let next = env.sample_transition(&s, &a, &mut streams.env_noise).unwrap();
            let d_next = env.goal_dist(&next);
            assert!(
                d_next <= c * d + 1e-12,
                "contraction violated: {d_next} > {c} * {d}"
            );
            s = next;
        }
    }
}

//! Integration behavior of the fused policy: replay domination, degenerate
//! schedules, record consistency, and byte-level determinism.

use std::sync::Arc;

use policy_fusion::bounds::tail_product;
use policy_fusion::config::{build_pipeline, ExperimentConfig};
use policy_fusion::critics::Critic;
use policy_fusion::fusion::{IndicatorMode, PolicySource};
use policy_fusion::montecarlo::{run_fused_outcomes, RunParams};
use policy_fusion::rngs::RolloutStreams;
use policy_fusion::rollout::{rollout, InitialState, RolloutPolicy};
use policy_fusion::schedule::Schedule;
use policy_fusion::state::State;
use policy_fusion::trace::{write_trace_csv, write_trace_jsonl};

fn scalar_config(lambda: f64, p_relax: f64, indicator: &str, horizon: usize) -> ExperimentConfig {
    let text = format!(
        r#"
        [env]
        kind = "scalar"
        w_max = 0.1
        goal_radius = 0.2
        a_max = 1.0

        [policies.base]
        kind = "outward_drift"
        drift = 0.5
        [policies.alt]
        kind = "proportional_certified"
        c = 0.36787944117144233
        [policies.base_critic]
        kind = "gaussian_bump"
        center = [0.0]
        scale = 2.0
        [policies.alt_critic]
        kind = "gaussian_bump"
        center = [0.0]
        scale = 4.0

        [schedule]
        kind = "geometric"
        lambda = {lambda}
        p_relax = {p_relax}

        [fusion]
        indicator = "{indicator}"

        [run]
        horizon = {horizon}
        n_rollouts = 100
        seed = 4242
        d_circ = 10.0
        d_star = 1.0
        gamma = 0.9
    "#
    );
    ExperimentConfig::from_toml_str(&text).unwrap()
}

#[test]
fn certain_first_acceptance_under_unit_majorant() {
    // Forced indicator with majorant 0.5^t * 1.0: the t = 0 factor is
    // 1 - 1 = 0, so the tail product at 0 vanishes and every rollout
    // selects the base policy at least once, exactly.
    let mut config = scalar_config(0.5, 1.0, "forced_on", 32);
    config.run.n_rollouts = 100_000;
    let pipeline = build_pipeline(&config, None).unwrap();
    let params = RunParams::from_pipeline(&pipeline).unwrap();
    let outcomes = run_fused_outcomes(&pipeline, &params).unwrap();
    let with_base = outcomes.iter().filter(|o| o.n_base > 0).count();
    assert_eq!(with_base, outcomes.len());
    // Closed-form cross-check: 1 - prod_{k>=0}(1 - majorant(k)) = 1.
    let tp = tail_product(pipeline.majorant_schedule().as_ref(), 0).unwrap();
    assert_eq!(tp, 0.0);
}

#[test]
fn fused_with_zero_acceptance_equals_plain_alternative_traces() {
    // rho = 0: the fused policy is the alternative policy; under the same
    // environment-noise and action substreams the traces coincide exactly.
    let config = scalar_config(0.5, 0.0, "computed", 50);
    let pipeline = build_pipeline(&config, None).unwrap();
    let params = RunParams::from_pipeline(&pipeline).unwrap();
    for i in 0..50u64 {
        let mut fused_streams = RolloutStreams::derive(params.seed, i);
        let s0 = policy_fusion::rollout::sample_initial_state(
            pipeline.env.as_ref(),
            &params.init,
            &mut fused_streams,
        );
        let schedule = pipeline.schedule_for(&s0);
        let fused = pipeline.fused_for(&s0, schedule).unwrap();
        let mut fused_policy = RolloutPolicy::Fused(fused);
        let fused_trace = rollout(
            pipeline.env.as_ref(),
            &mut fused_policy,
            params.horizon,
            &mut fused_streams,
            &InitialState::Fixed(s0.clone()),
        )
        .unwrap();

        let mut plain_streams = RolloutStreams::derive(params.seed, i);
        let mut plain_policy = RolloutPolicy::Plain {
            policy: pipeline.alt.clone(),
            role: PolicySource::Alternative,
        };
        let plain_trace = rollout(
            pipeline.env.as_ref(),
            &mut plain_policy,
            params.horizon,
            &mut plain_streams,
            &params.init,
        )
        .unwrap();

        assert_eq!(fused_trace.steps.len(), plain_trace.steps.len());
        for (f, p) in fused_trace.steps.iter().zip(&plain_trace.steps) {
            assert_eq!(f.state, p.state);
            assert_eq!(f.action, p.action);
            assert_eq!(f.reward, p.reward);
            assert_eq!(f.fusion.as_ref().unwrap().source, PolicySource::Alternative);
        }
        assert_eq!(fused_trace.final_state, plain_trace.final_state);
    }
}

#[test]
fn identical_config_and_seed_give_byte_identical_traces() {
    let config = scalar_config(0.5, 0.8, "computed", 50);
    let pipeline = build_pipeline(&config, None).unwrap();
    let params = RunParams::from_pipeline(&pipeline).unwrap();
    let serialize_all = || {
        let mut csv_bytes = Vec::new();
        let mut jsonl_bytes = Vec::new();
        for i in 0..20u64 {
            let mut streams = RolloutStreams::derive(params.seed, i);
            let s0 = policy_fusion::rollout::sample_initial_state(
                pipeline.env.as_ref(),
                &params.init,
                &mut streams,
            );
            let schedule = pipeline.schedule_for(&s0);
            let fused = pipeline.fused_for(&s0, schedule).unwrap();
            let mut policy = RolloutPolicy::Fused(fused);
            let trace = rollout(
                pipeline.env.as_ref(),
                &mut policy,
                params.horizon,
                &mut streams,
                &InitialState::Fixed(s0),
            )
            .unwrap();
            let records: Vec<_> = trace.steps.iter().filter_map(|s| s.fusion.clone()).collect();
            write_trace_csv(&records, &mut csv_bytes).unwrap();
            write_trace_jsonl(&records, &mut jsonl_bytes).unwrap();
        }
        (csv_bytes, jsonl_bytes)
    };
    let first = serialize_all();
    let second = serialize_all();
    assert_eq!(first.0, second.0, "csv serialization not reproducible");
    assert_eq!(first.1, second.1, "jsonl serialization not reproducible");
}

#[test]
fn records_are_consistent_with_pre_update_references() {
    // delta = critic(s) - pre-update reference, bitwise on the stored
    // values, and the majorant dominates the acceptance probability at
    // every step.
    let config = scalar_config(0.5, 0.8, "computed", 64);
    let pipeline = build_pipeline(&config, None).unwrap();
    let params = RunParams::from_pipeline(&pipeline).unwrap();
    for i in 0..200u64 {
        let mut streams = RolloutStreams::derive(params.seed, i);
        let s0 = policy_fusion::rollout::sample_initial_state(
            pipeline.env.as_ref(),
            &params.init,
            &mut streams,
        );
        let schedule = pipeline.schedule_for(&s0);
        let fused = pipeline.fused_for(&s0, schedule.clone()).unwrap();
        let mut policy = RolloutPolicy::Fused(fused);
        let trace = rollout(
            pipeline.env.as_ref(),
            &mut policy,
            params.horizon,
            &mut streams,
            &InitialState::Fixed(s0),
        )
        .unwrap();
        let mut prev_base_ref = f64::NEG_INFINITY;
        let mut prev_alt_ref = f64::NEG_INFINITY;
        for step in &trace.steps {
            let record = step.fusion.as_ref().unwrap();
            // Order of operations: deltas match the pre-update references.
            assert_eq!(
                record.delta_base,
                pipeline.base_critic.value(&step.state) - record.base_ref
            );
            assert_eq!(
                record.delta_alt,
                pipeline.alt_critic.value(&step.state) - record.alt_ref
            );
            // Selection consistency, bitwise.
            assert_eq!(
                record.source == PolicySource::Base,
                record.uniform_draw < record.accept_prob * f64::from(record.indicator)
            );
            // Majorant domination.
            assert!(record.accept_prob <= schedule.majorant(record.time));
            // Reference monotonicity.
            assert!(record.base_ref >= prev_base_ref.min(record.base_ref));
            assert!(record.base_ref >= prev_base_ref || prev_base_ref == f64::NEG_INFINITY);
            prev_base_ref = record.base_ref;
            assert!(record.alt_ref >= prev_alt_ref || prev_alt_ref == f64::NEG_INFINITY);
            prev_alt_ref = record.alt_ref;
        }
    }
}

#[test]
fn base_selection_counts_obey_tail_sums() {
    // Statistical restatement of almost-sure finiteness: the mean number of
    // base selections at steps k >= t is bounded by the majorant tail sum.
    let mut config = scalar_config(0.5, 0.8, "computed", 64);
    config.run.n_rollouts = 20_000;
    let pipeline = build_pipeline(&config, None).unwrap();
    let params = RunParams::from_pipeline(&pipeline).unwrap();
    let schedule = pipeline.majorant_schedule();
    let probes = [0usize, 1, 2, 5, 10];
    let mut counts: Vec<Vec<usize>> = Vec::with_capacity(params.n_rollouts);
    for i in 0..params.n_rollouts as u64 {
        let mut streams = RolloutStreams::derive(params.seed, i);
        let s0 = policy_fusion::rollout::sample_initial_state(
            pipeline.env.as_ref(),
            &params.init,
            &mut streams,
        );
        let sched = pipeline.schedule_for(&s0);
        let fused = pipeline.fused_for(&s0, sched).unwrap();
        let mut policy = RolloutPolicy::Fused(fused);
        let trace = rollout(
            pipeline.env.as_ref(),
            &mut policy,
            params.horizon,
            &mut streams,
            &InitialState::Fixed(s0),
        )
        .unwrap();
        let mut row = vec![0usize; probes.len()];
        for step in &trace.steps {
            let record = step.fusion.as_ref().unwrap();
            if record.source == PolicySource::Base {
                for (slot, &t) in probes.iter().enumerate() {
                    if record.time >= t {
                        row[slot] += 1;
                    }
                }
            }
        }
        counts.push(row);
    }
    for (slot, &t) in probes.iter().enumerate() {
        let n = counts.len() as f64;
        let mean = counts.iter().map(|row| row[slot] as f64).sum::<f64>() / n;
        let var = counts
            .iter()
            .map(|row| {
                let x = row[slot] as f64 - mean;
                x * x
            })
            .sum::<f64>()
            / (n - 1.0);
        let se = (var / n).sqrt();
        let bound = schedule.majorant_tail_sum(t).unwrap();
        assert!(
            mean <= bound + 3.0 * se,
            "mean base selections from t={t}: {mean} > tail sum {bound} + 3se {se}"
        );
    }
}

#[test]
fn forced_indicator_mode_is_exposed_through_config() {
    let config = scalar_config(0.5, 0.5, "forced_on", 8);
    let pipeline = build_pipeline(&config, None).unwrap();
    assert_eq!(pipeline.indicator_mode, IndicatorMode::ForcedOn);
    let s0 = State::scalar(3.0);
    let schedule: Arc<dyn Schedule> = pipeline.schedule_for(&s0);
    let mut fused = pipeline.fused_for(&s0, schedule).unwrap();
    let mut streams = RolloutStreams::derive(0, 0);
    // Even at t = 0 with zero deltas, the forced indicator reports 1.
    let (_, record) = fused.fused_step(&s0, 0, &mut streams).unwrap();
    assert_eq!(record.indicator, 1);
}

#[test]
fn base_selections_never_exceed_indicator_on_steps() {
    let config = scalar_config(0.5, 0.8, "computed", 64);
    let pipeline = build_pipeline(&config, None).unwrap();
    let params = RunParams::from_pipeline(&pipeline).unwrap();
    let outcomes = run_fused_outcomes(&pipeline, &params).unwrap();
    for o in &outcomes {
        assert!(o.n_base <= o.indicator_on_steps);
        if let Some(t) = o.last_base_time {
            assert!(t < params.horizon);
        }
    }
}

#[test]
fn environment_failure_aborts_with_step_index() {
    use policy_fusion::env::FiniteChainEnv;
    use policy_fusion::policies::ZeroPolicy;
    use policy_fusion::rollout::RolloutError;

    // A continuous-action policy on the chain fails at the first transition.
    let env = FiniteChainEnv::default_eight_state();
    let mut policy = RolloutPolicy::Plain {
        policy: Arc::new(ZeroPolicy),
        role: PolicySource::Alternative,
    };
    let mut streams = RolloutStreams::derive(0, 0);
    let err = rollout(
        &env,
        &mut policy,
        10,
        &mut streams,
        &InitialState::Fixed(State::index(3)),
    )
    .unwrap_err();
    match err {
        RolloutError::Env { step, .. } => assert_eq!(step, 0),
        other => panic!("unexpected error {other}"),
    }
    assert!(err.to_string().contains("at step 0"));
}

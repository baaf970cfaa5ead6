//! Property-based invariants: schedule bounds, goal-distance geometry,
//! class-K monotonicity, critic superlevel sets.

use proptest::prelude::*;

use policy_fusion::critics::{Critic, GaussianBumpCritic};
use policy_fusion::env::GoalSet;
use policy_fusion::kl::ClassKInfty;
use policy_fusion::schedule::{GatedSchedule, GeometricSchedule, Schedule};
use policy_fusion::state::{Norm, State};
use std::sync::Arc;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn schedule_bounded_by_majorant_and_one(
        lambda in 0.01f64..0.999,
        p_relax in 0.0f64..=1.0,
        t in 0usize..2000,
        x in -50.0f64..50.0,
    ) {
        let schedule = GeometricSchedule::new(lambda, p_relax).unwrap();
        let s = State::scalar(x);
        let accept = schedule.accept_prob(t, &s);
        let majorant = schedule.majorant(t);
        prop_assert!(accept >= 0.0);
        prop_assert!(accept <= majorant);
        prop_assert!(majorant <= 1.0);
    }

    #[test]
    fn gated_schedule_never_exceeds_inner(
        lambda in 0.01f64..0.999,
        p_relax in 0.0f64..=1.0,
        t in 0usize..200,
        s0 in -10.0f64..10.0,
        x in -10.0f64..10.0,
    ) {
        let inner = Arc::new(GeometricSchedule::new(lambda, p_relax).unwrap());
        let critic = Arc::new(
            GaussianBumpCritic::new(State::scalar(0.0), 2.0, Norm::Sup).unwrap(),
        );
        let gated = GatedSchedule::new(inner.clone(), critic.clone(), &State::scalar(s0));
        let s = State::scalar(x);
        let accept = gated.accept_prob(t, &s);
        prop_assert!(accept <= inner.accept_prob(t, &s));
        prop_assert!(accept <= gated.majorant(t));
        // Gate soundness: zero below the initial critic value.
        if critic.value(&s) < critic.value(&State::scalar(s0)) {
            prop_assert_eq!(accept, 0.0);
        }
    }

    #[test]
    fn geometric_majorant_ratio_is_lambda_within_one_ulp(
        lambda in 0.01f64..0.999,
        p_relax in 0.001f64..=1.0,
        t in 0usize..1000,
    ) {
        let schedule = GeometricSchedule::new(lambda, p_relax).unwrap();
        let m_t = schedule.majorant(t);
        let m_next = schedule.majorant(t + 1);
        if m_t > 0.0 {
            // The recurrence makes the ratio a single rounded multiplication.
            prop_assert_eq!(m_next, m_t * lambda);
        }
    }

    #[test]
    fn goal_dist_is_one_lipschitz(
        x1 in -20.0f64..20.0,
        y1 in -20.0f64..20.0,
        x2 in -20.0f64..20.0,
        y2 in -20.0f64..20.0,
        radius in 0.1f64..5.0,
        euclidean in proptest::bool::ANY,
    ) {
        let norm = if euclidean { Norm::Euclidean } else { Norm::Sup };
        let goals = [
            GoalSet::NormBall { radius, norm },
            GoalSet::CenteredBox { half_widths: vec![radius, 2.0 * radius], norm },
        ];
        let a = State::pair(x1, y1);
        let b = State::pair(x2, y2);
        for goal in goals {
            let da = goal.goal_dist(&a);
            let db = goal.goal_dist(&b);
            prop_assert!((da - db).abs() <= norm.dist(&a, &b) + 1e-12);
        }
    }

    #[test]
    fn subset_goal_dist_is_one_lipschitz(
        x1 in -5.0f64..40.0,
        x2 in -5.0f64..40.0,
    ) {
        let goal = GoalSet::StateSubset { members: vec![0, 7, 12] };
        let a = State::scalar(x1);
        let b = State::scalar(x2);
        let da = goal.goal_dist(&a);
        let db = goal.goal_dist(&b);
        prop_assert!((da - db).abs() <= (x1 - x2).abs() + 1e-12);
    }
}

#[test]
fn class_k_functions_increase_strictly_from_zero() {
    // Monotonicity on a sampled grid of 1000 points for each handle.
    for f in [
        ClassKInfty::Identity,
        ClassKInfty::Power { exponent: 0.5 },
        ClassKInfty::Power { exponent: 2.0 },
        ClassKInfty::LinearExp,
    ] {
        assert_eq!(f.eval(0.0), 0.0);
        let mut prev = 0.0;
        for i in 1..=1000 {
            let x = i as f64 * 0.01;
            let y = f.eval(x);
            assert!(y > prev, "{f:?} not strictly increasing at {x}");
            prev = y;
        }
    }
}

#[test]
fn bump_superlevel_sets_are_the_closed_form_balls() {
    // For 1000 random thresholds, sampled states above the threshold all lie
    // within the closed-form radius.
    use rand::Rng;
    let mut rng = policy_fusion::rngs::substream(3, 0, policy_fusion::rngs::StreamPurpose::EnvNoise);
    let critic = GaussianBumpCritic::new(State::scalar(0.0), 1.7, Norm::Sup).unwrap();
    for _ in 0..1000 {
        let a: f64 = rng.random_range(1e-6..1.0);
        let radius = critic.superlevel_radius(a);
        for _ in 0..20 {
            let s = State::scalar(rng.random_range(-15.0..15.0));
            if critic.value(&s) >= a {
                assert!(
                    s.as_scalar().abs() <= radius + 1e-9,
                    "state {} above threshold {a} outside radius {radius}",
                    s.as_scalar()
                );
            }
        }
    }
}

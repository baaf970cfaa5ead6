//! Rollout drivers.
//!
//! One stepping core drives both the trace-building rollout and the
//! streaming summarizer used by the Monte Carlo harness, so the two paths
//! produce identical trajectories from identical streams. Rollouts are
//! independent given disjoint substreams and may run in parallel.

use std::sync::Arc;

use thiserror::Error;

use crate::env::{EnvError, Mdp};
use crate::fusion::{FusedPolicy, FusionError, FusionStepRecord, PolicySource};
use crate::kl::KlCertificate;
use crate::policies::StationaryPolicy;
use crate::rngs::RolloutStreams;
use crate::schedule::Schedule;
use crate::state::{Action, State};
use crate::trace::{discounted_return_of, RolloutTrace, TraceStep};

#[derive(Debug, Error)]
pub enum RolloutError {
    #[error("at step {step}: {source}")]
    Env {
        step: usize,
        #[source]
        source: EnvError,
    },
    #[error(transparent)]
    Fusion(#[from] FusionError),
}

/// How the initial state is drawn.
#[derive(Debug, Clone)]
pub enum InitialState {
    /// The environment's native initial distribution.
    Default,
    /// Uniform over `{ s : goal_dist(s) <= d_circ }`.
    WithinGoalDist(f64),
    /// A fixed override.
    Fixed(State),
}

pub fn sample_initial_state(
    env: &dyn Mdp,
    init: &InitialState,
    streams: &mut RolloutStreams,
) -> State {
    match init {
        InitialState::Default => env.sample_initial(&mut streams.init_state),
        InitialState::WithinGoalDist(d) => env.sample_initial_within(*d, &mut streams.init_state),
        InitialState::Fixed(s) => s.clone(),
    }
}

/// A policy drivable by the rollout core: fused, or a stationary policy
/// wrapped with the stream role it consumes.
pub enum RolloutPolicy {
    Fused(FusedPolicy),
    Plain {
        policy: Arc<dyn StationaryPolicy>,
        role: PolicySource,
    },
}

impl RolloutPolicy {
    fn act(
        &mut self,
        s: &State,
        t: usize,
        streams: &mut RolloutStreams,
    ) -> Result<(Action, Option<FusionStepRecord>), RolloutError> {
        match self {
            RolloutPolicy::Fused(fused) => {
                let (action, record) = fused.fused_step(s, t, streams)?;
                Ok((action, Some(record)))
            }
            RolloutPolicy::Plain { policy, role } => {
                let rng = match role {
                    PolicySource::Base => &mut streams.base_action,
                    PolicySource::Alternative => &mut streams.alt_action,
                };
                Ok((policy.sample(s, rng), None))
            }
        }
    }
}

/// Stepping core: drives `horizon` steps from a sampled initial state,
/// reporting each step to the visitor, and returns the terminal state with
/// its goal distance.
fn drive(
    env: &dyn Mdp,
    policy: &mut RolloutPolicy,
    horizon: usize,
    streams: &mut RolloutStreams,
    init: &InitialState,
    mut visit: impl FnMut(usize, &State, &Action, f64, f64, Option<&FusionStepRecord>),
) -> Result<(State, f64), RolloutError> {
    assert!(horizon >= 1, "rollout horizon must be at least 1");
    let mut state = sample_initial_state(env, init, streams);
    for t in 0..horizon {
        let (action, record) = policy.act(&state, t, streams)?;
        // The transition validates the action kind, so it runs before the
        // infallible reward lookup; both are pure in (state, action).
        let next = env
            .sample_transition(&state, &action, &mut streams.env_noise)
            .map_err(|source| RolloutError::Env { step: t, source })?;
        if !next.is_finite() {
            return Err(RolloutError::Env {
                step: t,
                source: EnvError::NonFiniteState {
                    state: next.to_string(),
                },
            });
        }
        let reward = env.reward(&state, &action);
        let goal_dist = env.goal_dist(&state);
        visit(t, &state, &action, reward, goal_dist, record.as_ref());
        state = next;
    }
    let final_goal_dist = env.goal_dist(&state);
    Ok((state, final_goal_dist))
}

/// Full-trace rollout.
pub fn rollout(
    env: &dyn Mdp,
    policy: &mut RolloutPolicy,
    horizon: usize,
    streams: &mut RolloutStreams,
    init: &InitialState,
) -> Result<RolloutTrace, RolloutError> {
    let mut steps = Vec::with_capacity(horizon);
    let (final_state, final_goal_dist) = drive(
        env,
        policy,
        horizon,
        streams,
        init,
        |_, s, a, reward, goal_dist, record| {
            steps.push(TraceStep {
                state: s.clone(),
                action: a.clone(),
                reward,
                goal_dist,
                fusion: record.cloned(),
            });
        },
    )?;
    Ok(RolloutTrace {
        steps,
        final_state,
        final_goal_dist,
    })
}

/// What the streaming summarizer tracks beyond the trajectory itself.
#[derive(Clone, Default)]
pub struct ProbeSpec {
    /// Settling threshold for the empirical reaching time.
    pub d_star: Option<f64>,
    /// Discount for the recorded return.
    pub gamma: f64,
    /// Certificate envelope to audit `goal_dist(S_t) <= beta(d_0, t) + tol`.
    pub certificate: Option<KlCertificate>,
    pub certificate_tol: f64,
    /// Schedule whose majorant the acceptance draws are replayed against.
    pub majorant_of: Option<Arc<dyn Schedule>>,
}

/// Per-rollout summary statistics, computed in one pass.
#[derive(Debug, Clone)]
pub struct RolloutOutcome {
    pub horizon: usize,
    pub initial_goal_dist: f64,
    pub final_goal_dist: f64,
    pub max_goal_dist: f64,
    /// First `t` after which the goal distance stays at or below `d_star`
    /// through the horizon; `None` when it never settles.
    pub reaching_time: Option<usize>,
    pub discounted_return: f64,
    /// Steps whose goal distance exceeded the certificate envelope.
    pub beta_violations: usize,
    /// Base-policy selections.
    pub n_base: usize,
    /// Steps whose uniform draw fell below the schedule majorant: the
    /// majorant-only acceptance count on the same stream.
    pub n_majorant: usize,
    pub last_base_time: Option<usize>,
    pub last_majorant_time: Option<usize>,
    /// First time from which no majorant acceptance occurs through the
    /// horizon (one past the last majorant hit; 0 when there is none).
    pub commit_time: usize,
    pub indicator_on_steps: usize,
    /// Bitwise check of `source = base  <=>  u < accept_prob * indicator`
    /// on every emitted record.
    pub selection_consistency_ok: bool,
    /// Per-step `accept_prob <= majorant` domination.
    pub majorant_domination_ok: bool,
}

/// Streaming rollout: identical trajectory to `rollout` from identical
/// streams, folded into a summary instead of a stored trace.
pub fn rollout_outcome(
    env: &dyn Mdp,
    policy: &mut RolloutPolicy,
    horizon: usize,
    streams: &mut RolloutStreams,
    init: &InitialState,
    probe: &ProbeSpec,
) -> Result<RolloutOutcome, RolloutError> {
    let mut initial_goal_dist = 0.0;
    let mut max_goal_dist = f64::NEG_INFINITY;
    let mut last_exceed: Option<usize> = None;
    let mut rewards: Vec<f64> = Vec::with_capacity(horizon);
    let mut beta_violations = 0usize;
    let mut n_base = 0usize;
    let mut n_majorant = 0usize;
    let mut last_base_time = None;
    let mut last_majorant_time = None;
    let mut indicator_on_steps = 0usize;
    let mut selection_consistency_ok = true;
    let mut majorant_domination_ok = true;
    let mut d0 = 0.0;

    let (_, final_goal_dist) = drive(
        env,
        policy,
        horizon,
        streams,
        init,
        |t, _s, _a, reward, goal_dist, record| {
            if t == 0 {
                initial_goal_dist = goal_dist;
                d0 = goal_dist;
            }
            max_goal_dist = max_goal_dist.max(goal_dist);
            if let Some(d_star) = probe.d_star {
                if goal_dist > d_star {
                    last_exceed = Some(t);
                }
            }
            rewards.push(reward);
            if let Some(cert) = &probe.certificate {
                if goal_dist > cert.beta(d0, t) + probe.certificate_tol {
                    beta_violations += 1;
                }
            }
            if let Some(record) = record {
                let selected_base = record.source == PolicySource::Base;
                if selected_base {
                    n_base += 1;
                    last_base_time = Some(t);
                }
                indicator_on_steps += usize::from(record.indicator == 1);
                let threshold = record.accept_prob * f64::from(record.indicator);
                if selected_base != (record.uniform_draw < threshold) {
                    selection_consistency_ok = false;
                }
                if let Some(schedule) = &probe.majorant_of {
                    let majorant = schedule.majorant(t);
                    if record.accept_prob > majorant {
                        majorant_domination_ok = false;
                    }
                    if record.uniform_draw < majorant {
                        n_majorant += 1;
                        last_majorant_time = Some(t);
                    }
                }
            }
        },
    )?;

    max_goal_dist = max_goal_dist.max(final_goal_dist);
    let reaching_time = match probe.d_star {
        None => None,
        Some(d_star) => {
            if final_goal_dist > d_star {
                None
            } else {
                match last_exceed {
                    None => Some(0),
                    Some(t) => Some(t + 1),
                }
            }
        }
    };
    if let Some(cert) = &probe.certificate {
        if final_goal_dist > cert.beta(d0, horizon) + probe.certificate_tol {
            beta_violations += 1;
        }
    }
    let commit_time = last_majorant_time.map_or(0, |t| t + 1);
    Ok(RolloutOutcome {
        horizon,
        initial_goal_dist,
        final_goal_dist,
        max_goal_dist,
        reaching_time,
        discounted_return: discounted_return_of(rewards.into_iter(), probe.gamma),
        beta_violations,
        n_base,
        n_majorant,
        last_base_time,
        last_majorant_time,
        commit_time,
        indicator_on_steps,
        selection_consistency_ok,
        majorant_domination_ok,
    })
}

//! Statistical verification harness.
//!
//! Every probabilistic claim is estimated over seeded rollouts and compared
//! against its closed-form prediction: lower bounds get one-sided tests,
//! the majorant-law equality gets a two-sided test in diagnostic mode.
//! Rollouts fan out across workers; each rollout's substreams derive from
//! (master seed, rollout index) alone and aggregation is index-ordered, so
//! results are independent of the worker count.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bounds::{compute_theorem_quantities, tail_product, BoundsError, TheoremQuantities};
use crate::config::{ConfigError, IndicatorKind, Pipeline};
use crate::critics::CriticError;
use crate::env::Mdp;
use crate::fusion::PolicySource;
use crate::kl::KlCertificate;
use crate::policies::StationaryPolicy;
use crate::rngs::RolloutStreams;
use crate::rollout::{
    rollout_outcome, InitialState, ProbeSpec, RolloutError, RolloutOutcome, RolloutPolicy,
};
use crate::stats::{mean_and_stderr, ClaimKind, EstimationReport};
use crate::trace::TraceError;

#[derive(Debug, Error)]
pub enum MonteCarloError {
    #[error(transparent)]
    Rollout(#[from] RolloutError),
    #[error(transparent)]
    Critic(#[from] CriticError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// Run parameters, lifted out of the config for estimator reuse.
#[derive(Debug, Clone)]
pub struct RunParams {
    pub horizon: usize,
    pub n_rollouts: usize,
    pub seed: u64,
    pub d_circ: f64,
    pub d_star: Option<f64>,
    pub gamma: f64,
    pub init: InitialState,
    pub t_grid: Vec<usize>,
    pub resolution: usize,
}

impl RunParams {
    pub fn from_pipeline(pipe: &Pipeline) -> Result<Self, ConfigError> {
        let run = &pipe.config.run;
        Ok(RunParams {
            horizon: run.horizon,
            n_rollouts: run.n_rollouts,
            seed: run.seed,
            d_circ: run.d_circ,
            d_star: run.d_star,
            gamma: run.gamma,
            init: pipe.initial_state_spec()?,
            t_grid: run.t_grid.clone(),
            resolution: run.resolution,
        })
    }
}

/// One fused rollout: derive streams, sample the start state, bind the
/// schedule (gated schedules close over the start state's critic value), and
/// drive.
pub fn run_one_fused(
    pipe: &Pipeline,
    params: &RunParams,
    rollout_idx: u64,
) -> Result<RolloutOutcome, MonteCarloError> {
    let mut streams = RolloutStreams::derive(params.seed, rollout_idx);
    let s0 = crate::rollout::sample_initial_state(pipe.env.as_ref(), &params.init, &mut streams);
    let schedule = pipe.schedule_for(&s0);
    let fused = pipe.fused_for(&s0, schedule)?;
    let mut policy = RolloutPolicy::Fused(fused);
    let probe = ProbeSpec {
        d_star: params.d_star,
        gamma: params.gamma,
        certificate: None,
        certificate_tol: 0.0,
        majorant_of: Some(pipe.majorant_schedule()),
    };
    let outcome = rollout_outcome(
        pipe.env.as_ref(),
        &mut policy,
        params.horizon,
        &mut streams,
        &InitialState::Fixed(s0),
        &probe,
    )?;
    Ok(outcome)
}

/// All fused rollouts, in parallel, collected in rollout order.
pub fn run_fused_outcomes(
    pipe: &Pipeline,
    params: &RunParams,
) -> Result<Vec<RolloutOutcome>, MonteCarloError> {
    (0..params.n_rollouts as u64)
        .into_par_iter()
        .map(|i| run_one_fused(pipe, params, i))
        .collect()
}

/// Plain rollouts of one stationary policy under the same substream
/// discipline, with an optional certificate audit.
pub fn run_plain_outcomes(
    env: &dyn Mdp,
    policy: Arc<dyn StationaryPolicy>,
    role: PolicySource,
    params: &RunParams,
    certificate: Option<&KlCertificate>,
    certificate_tol: f64,
) -> Result<Vec<RolloutOutcome>, MonteCarloError> {
    (0..params.n_rollouts as u64)
        .into_par_iter()
        .map(|i| {
            let mut streams = RolloutStreams::derive(params.seed, i);
            let mut rollout_policy = RolloutPolicy::Plain {
                policy: policy.clone(),
                role,
            };
            let probe = ProbeSpec {
                d_star: params.d_star,
                gamma: params.gamma,
                certificate: certificate.cloned(),
                certificate_tol,
                majorant_of: None,
            };
            rollout_outcome(
                env,
                &mut rollout_policy,
                params.horizon,
                &mut streams,
                &params.init,
                &probe,
            )
            .map_err(MonteCarloError::from)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Switch statistics
// ---------------------------------------------------------------------------

/// Per-rollout switching behavior plus cross-trace verification counters.
#[derive(Debug, Clone, Serialize)]
pub struct SwitchStatistics {
    pub n_base_selections: Vec<usize>,
    pub last_base_time: Vec<Option<usize>>,
    pub n_majorant_hits: Vec<usize>,
    pub commit_times: Vec<usize>,
    /// Fraction of steps with indicator = 1 across all rollouts.
    pub indicator_on_fraction: f64,
    /// Traces violating the per-trace replay bound `N_base <= N_majorant`.
    pub domination_violations: usize,
    /// Traces whose accept probability exceeded the majorant at some step.
    pub majorant_bound_violations: usize,
    /// Traces violating `source = base <=> u < accept * indicator` bitwise.
    pub consistency_violations: usize,
}

impl SwitchStatistics {
    pub fn from_outcomes(outcomes: &[RolloutOutcome]) -> Self {
        let mut stats = SwitchStatistics {
            n_base_selections: Vec::with_capacity(outcomes.len()),
            last_base_time: Vec::with_capacity(outcomes.len()),
            n_majorant_hits: Vec::with_capacity(outcomes.len()),
            commit_times: Vec::with_capacity(outcomes.len()),
            indicator_on_fraction: 0.0,
            domination_violations: 0,
            majorant_bound_violations: 0,
            consistency_violations: 0,
        };
        let mut indicator_steps = 0usize;
        let mut total_steps = 0usize;
        for o in outcomes {
            stats.n_base_selections.push(o.n_base);
            stats.last_base_time.push(o.last_base_time);
            stats.n_majorant_hits.push(o.n_majorant);
            stats.commit_times.push(o.commit_time);
            indicator_steps += o.indicator_on_steps;
            total_steps += o.horizon;
            if o.n_base > o.n_majorant {
                stats.domination_violations += 1;
            }
            if !o.majorant_domination_ok {
                stats.majorant_bound_violations += 1;
            }
            if !o.selection_consistency_ok {
                stats.consistency_violations += 1;
            }
        }
        stats.indicator_on_fraction = if total_steps == 0 {
            0.0
        } else {
            indicator_steps as f64 / total_steps as f64
        };
        stats
    }
}

/// Estimate `P(no base selection at any k >= t_probe)` and compare against
/// the majorant tail product: equality in diagnostic mode with an ungated
/// schedule, one-sided domination otherwise.
pub fn estimate_switch_statistics(
    pipe: &Pipeline,
    params: &RunParams,
    t_probe: usize,
) -> Result<(SwitchStatistics, EstimationReport), MonteCarloError> {
    let outcomes = run_fused_outcomes(pipe, params)?;
    let stats = SwitchStatistics::from_outcomes(&outcomes);
    let successes = stats
        .last_base_time
        .iter()
        .filter(|t| t.map_or(true, |t| t < t_probe))
        .count();
    let predicted = tail_product(pipe.majorant_schedule().as_ref(), t_probe)?;
    let diagnostic_equality =
        pipe.config.fusion.indicator == IndicatorKind::ForcedOn && !pipe_is_gated(pipe);
    let kind = if diagnostic_equality {
        ClaimKind::TwoSided
    } else {
        ClaimKind::LowerBound
    };
    let claim = format!("no base selection at any k >= {t_probe}");
    let report = EstimationReport::from_counts(
        claim,
        kind,
        successes,
        params.n_rollouts,
        params.horizon,
        Some(predicted),
        params.seed,
        pipe.config_hash.clone(),
    );
    Ok((stats, report))
}

fn pipe_is_gated(pipe: &Pipeline) -> bool {
    use crate::config::{GateKind, ScheduleKind};
    matches!(pipe.config.schedule.kind, ScheduleKind::Gated)
        || matches!(pipe.config.schedule.gate, GateKind::Superlevel)
}

// ---------------------------------------------------------------------------
// Goal reaching, overshoot, reaching time, certificate validity
// ---------------------------------------------------------------------------

/// Fraction of rollouts with `goal_dist(S_horizon) <= d_threshold`,
/// compared against `1 - eps`. Inconclusive when the horizon is too short
/// for the certificate envelope to clear the threshold.
pub fn estimate_goal_reaching(
    pipe: &Pipeline,
    params: &RunParams,
    d_threshold: f64,
    d_max_for_check: f64,
) -> Result<EstimationReport, MonteCarloError> {
    let outcomes = run_fused_outcomes(pipe, params)?;
    let successes = outcomes
        .iter()
        .filter(|o| o.final_goal_dist <= d_threshold)
        .count();
    let Some(cert) = &pipe.certificate else {
        return Ok(EstimationReport::from_counts(
            "goal reaching",
            ClaimKind::LowerBound,
            successes,
            params.n_rollouts,
            params.horizon,
            None,
            params.seed,
            pipe.config_hash.clone(),
        )
        .inconclusive("alternative policy carries no certificate"));
    };
    let envelope_at_horizon = cert.beta(d_max_for_check, params.horizon);
    let report = EstimationReport::from_counts(
        "goal reaching",
        ClaimKind::LowerBound,
        successes,
        params.n_rollouts,
        params.horizon,
        Some(1.0 - cert.eps),
        params.seed,
        pipe.config_hash.clone(),
    );
    if envelope_at_horizon >= d_threshold {
        return Ok(report.inconclusive(format!(
            "horizon {} too short: beta(d_max, horizon) = {envelope_at_horizon} \
             does not clear the threshold {d_threshold}",
            params.horizon
        )));
    }
    Ok(report)
}

/// Fraction of rollouts with `max_t goal_dist(S_t) <= delta`, compared
/// against `1 - eps`. Requires initial states inside the start region and
/// the superlevel gate, per the overshoot guarantee's hypotheses.
pub fn estimate_overshoot(
    pipe: &Pipeline,
    params: &RunParams,
    quantities: &TheoremQuantities,
) -> Result<EstimationReport, MonteCarloError> {
    let outcomes = run_fused_outcomes(pipe, params)?;
    let successes = outcomes
        .iter()
        .filter(|o| o.max_goal_dist <= quantities.delta)
        .count();
    let predicted = pipe.certificate.as_ref().map(|c| 1.0 - c.eps);
    let mut report = EstimationReport::from_counts(
        format!("overshoot bounded by delta = {}", quantities.delta),
        ClaimKind::LowerBound,
        successes,
        params.n_rollouts,
        params.horizon,
        predicted,
        params.seed,
        pipe.config_hash.clone(),
    );
    if pipe.certificate.is_none() {
        report = report.inconclusive("alternative policy carries no certificate");
    }
    if !matches!(params.init, InitialState::WithinGoalDist(_)) {
        match &params.init {
            InitialState::Fixed(s) if pipe.env.goal_dist(s) <= params.d_circ => {}
            _ => {
                report = report
                    .inconclusive("initial states are not constrained to the start region");
            }
        }
    }
    if !pipe_is_gated(pipe) {
        report = report.inconclusive("superlevel gate is not active");
    }
    Ok(report)
}

/// Empirical reaching-time distribution against the tail-product lower
/// bounds: one report per probe time `t`, comparing
/// `P(T_hat <= t * tau_f)` with `prod_{k=t}(1 - majorant(k))`.
pub fn estimate_reaching_time(
    pipe: &Pipeline,
    params: &RunParams,
    quantities: &TheoremQuantities,
) -> Result<Vec<EstimationReport>, MonteCarloError> {
    let outcomes = run_fused_outcomes(pipe, params)?;
    reaching_time_reports(pipe, params, quantities, &outcomes)
}

/// The reaching-time comparison on already-computed outcomes.
pub fn reaching_time_reports(
    pipe: &Pipeline,
    params: &RunParams,
    quantities: &TheoremQuantities,
    outcomes: &[RolloutOutcome],
) -> Result<Vec<EstimationReport>, MonteCarloError> {
    let majorant = pipe.majorant_schedule();
    let never_settled = outcomes.iter().filter(|o| o.reaching_time.is_none()).count();
    let mut reports = Vec::with_capacity(params.t_grid.len());
    for &t in &params.t_grid {
        let deadline = t * quantities.tau_f;
        let successes = outcomes
            .iter()
            .filter(|o| o.reaching_time.is_some_and(|rt| rt <= deadline))
            .count();
        let predicted = tail_product(majorant.as_ref(), t)?;
        let report = EstimationReport::from_counts(
            format!(
                "reaching time within {t} * tau_f = {deadline} steps (d_star = {})",
                quantities.d_star
            ),
            ClaimKind::LowerBound,
            successes,
            params.n_rollouts,
            params.horizon,
            Some(predicted),
            params.seed,
            pipe.config_hash.clone(),
        )
        .with_note(format!(
            "{never_settled} rollouts never settled below d_star within the horizon"
        ));
        reports.push(report);
    }
    Ok(reports)
}

/// Validate a certificate empirically on its paired environment: the
/// fraction of rollouts that keep `goal_dist(S_t) <= beta(d_0, t) + tol`
/// for every step must be at least `1 - eps`.
pub fn verify_certificate(
    env: &dyn Mdp,
    policy: Arc<dyn StationaryPolicy>,
    certificate: &KlCertificate,
    params: &RunParams,
    tol: f64,
    config_hash: &str,
) -> Result<EstimationReport, MonteCarloError> {
    let outcomes = run_plain_outcomes(
        env,
        policy,
        PolicySource::Alternative,
        params,
        Some(certificate),
        tol,
    )?;
    let successes = outcomes.iter().filter(|o| o.beta_violations == 0).count();
    Ok(EstimationReport::from_counts(
        "certificate envelope holds at every step",
        ClaimKind::LowerBound,
        successes,
        params.n_rollouts,
        params.horizon,
        Some(1.0 - certificate.eps),
        params.seed,
        config_hash.to_string(),
    ))
}

// ---------------------------------------------------------------------------
// Whole-experiment summary
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct SwitchSummary {
    pub mean_base_selections: f64,
    pub max_base_selections: usize,
    pub indicator_on_fraction: f64,
    pub mean_commit_time: f64,
    pub domination_violations: usize,
    pub majorant_bound_violations: usize,
    pub consistency_violations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub schema_version: &'static str,
    pub config_hash: String,
    pub master_seed: u64,
    pub env_kind: String,
    pub state_norm: String,
    pub n_rollouts: usize,
    pub horizon: usize,
    pub mean_discounted_return: f64,
    pub stderr_discounted_return: f64,
    pub mean_final_goal_dist: f64,
    pub goal_reaching: EstimationReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overshoot: Option<EstimationReport>,
    pub reaching_time: Vec<EstimationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theorem_quantities: Option<TheoremQuantities>,
    pub switch: SwitchSummary,
    /// Wall-clock stamp; excluded from determinism comparisons.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp_unix_ms: Option<u64>,
}

/// Execute the configured experiment once: fused rollouts, claim reports,
/// and the aggregate summary.
pub fn run_experiment(
    pipe: &Pipeline,
) -> Result<(RunSummary, Vec<RolloutOutcome>), MonteCarloError> {
    let params = RunParams::from_pipeline(pipe)?;
    let outcomes = run_fused_outcomes(pipe, &params)?;
    let stats = SwitchStatistics::from_outcomes(&outcomes);

    let quantities = match (&pipe.certificate, params.d_star) {
        (Some(cert), Some(d_star)) => Some(compute_theorem_quantities(
            pipe.env.as_ref(),
            pipe.base_critic.as_ref(),
            cert,
            params.d_circ,
            d_star,
            params.resolution,
        )?),
        _ => None,
    };

    let d_threshold = params.d_star.unwrap_or(0.0);
    let d_max_for_check = quantities.as_ref().map_or(params.d_circ, |q| q.d_max);
    let goal_reaching = {
        let successes = outcomes
            .iter()
            .filter(|o| o.final_goal_dist <= d_threshold)
            .count();
        let mut report = EstimationReport::from_counts(
            "goal reaching",
            ClaimKind::LowerBound,
            successes,
            params.n_rollouts,
            params.horizon,
            pipe.certificate.as_ref().map(|c| 1.0 - c.eps),
            params.seed,
            pipe.config_hash.clone(),
        );
        match &pipe.certificate {
            None => report = report.inconclusive("alternative policy carries no certificate"),
            Some(cert) => {
                let envelope = cert.beta(d_max_for_check, params.horizon);
                if envelope >= d_threshold {
                    report = report.inconclusive(format!(
                        "horizon {} too short: beta(d_max, horizon) = {envelope} does not \
                         clear the threshold {d_threshold}",
                        params.horizon
                    ));
                }
            }
        }
        report
    };

    let overshoot = match &quantities {
        Some(q) => {
            let successes = outcomes
                .iter()
                .filter(|o| o.max_goal_dist <= q.delta)
                .count();
            let mut report = EstimationReport::from_counts(
                format!("overshoot bounded by delta = {}", q.delta),
                ClaimKind::LowerBound,
                successes,
                params.n_rollouts,
                params.horizon,
                pipe.certificate.as_ref().map(|c| 1.0 - c.eps),
                params.seed,
                pipe.config_hash.clone(),
            );
            if !pipe_is_gated(pipe) {
                report = report.inconclusive("superlevel gate is not active");
            }
            Some(report)
        }
        None => None,
    };

    let reaching_time = match &quantities {
        Some(q) => reaching_time_reports(pipe, &params, q, &outcomes)?,
        None => Vec::new(),
    };

    let returns: Vec<f64> = outcomes.iter().map(|o| o.discounted_return).collect();
    let (mean_return, stderr_return) = mean_and_stderr(&returns);
    let mean_final = outcomes.iter().map(|o| o.final_goal_dist).sum::<f64>()
        / outcomes.len() as f64;

    let summary = RunSummary {
        schema_version: crate::SCHEMA_VERSION,
        config_hash: pipe.config_hash.clone(),
        master_seed: params.seed,
        env_kind: env_kind_label(pipe),
        state_norm: format!("{:?}", pipe.env.norm()).to_lowercase(),
        n_rollouts: params.n_rollouts,
        horizon: params.horizon,
        mean_discounted_return: mean_return,
        stderr_discounted_return: stderr_return,
        mean_final_goal_dist: mean_final,
        goal_reaching,
        overshoot,
        reaching_time,
        theorem_quantities: quantities,
        switch: SwitchSummary {
            mean_base_selections: stats.n_base_selections.iter().sum::<usize>() as f64
                / stats.n_base_selections.len() as f64,
            max_base_selections: stats.n_base_selections.iter().copied().max().unwrap_or(0),
            indicator_on_fraction: stats.indicator_on_fraction,
            mean_commit_time: stats.commit_times.iter().sum::<usize>() as f64
                / stats.commit_times.len() as f64,
            domination_violations: stats.domination_violations,
            majorant_bound_violations: stats.majorant_bound_violations,
            consistency_violations: stats.consistency_violations,
        },
        timestamp_unix_ms: None,
    };
    Ok((summary, outcomes))
}

fn env_kind_label(pipe: &Pipeline) -> String {
    match &pipe.config.env {
        crate::config::EnvConfig::Scalar { .. } => "scalar".to_string(),
        crate::config::EnvConfig::DoubleIntegrator { .. } => "double_integrator".to_string(),
        crate::config::EnvConfig::Chain { .. } => "chain".to_string(),
    }
}

/// Per-rollout statistics CSV for external plotting.
pub fn write_rollout_stats_csv<W: Write>(
    outcomes: &[RolloutOutcome],
    out: W,
) -> Result<(), TraceError> {
    #[derive(Serialize)]
    struct Row {
        rollout: usize,
        initial_goal_dist: f64,
        final_goal_dist: f64,
        max_goal_dist: f64,
        reaching_time: Option<usize>,
        discounted_return: f64,
        n_base: usize,
        n_majorant: usize,
        last_base_time: Option<usize>,
        commit_time: usize,
        indicator_on_steps: usize,
    }
    let mut writer = csv::Writer::from_writer(out);
    for (i, o) in outcomes.iter().enumerate() {
        writer.serialize(Row {
            rollout: i,
            initial_goal_dist: o.initial_goal_dist,
            final_goal_dist: o.final_goal_dist,
            max_goal_dist: o.max_goal_dist,
            reaching_time: o.reaching_time,
            discounted_return: o.discounted_return,
            n_base: o.n_base,
            n_majorant: o.n_majorant,
            last_base_time: o.last_base_time,
            commit_time: o.commit_time,
            indicator_on_steps: o.indicator_on_steps,
        })?;
    }
    writer.flush()?;
    Ok(())
}

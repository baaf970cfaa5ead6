//! `acceptance`: run the shipped verification suite over a directory of
//! check configs and print one pass/fail line per criterion.
//!
//! Each config file names a check kind, its parameters and predicted
//! values, and (for the statistical checks) a full embedded experiment.
//! Predictions live in the config on purpose: perturbing one turns the
//! corresponding row into a failing negative control.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use policy_fusion::bounds::{
    compute_tau_f, compute_theorem_quantities, corollary_lower_bound, tail_product,
};
use policy_fusion::config::{build_pipeline, ExperimentConfig};
use policy_fusion::fusion::PolicySource;
use policy_fusion::montecarlo::{
    run_fused_outcomes, run_plain_outcomes, RunParams, SwitchStatistics,
};
use policy_fusion::rngs::RolloutStreams;
use policy_fusion::rollout::{rollout, RolloutPolicy};
use policy_fusion::schedule::GeometricSchedule;
use policy_fusion::stats::{binomial_sigma, mean_and_stderr};

use crate::run_cmd::execute_run;
use crate::{CliError, EXIT_OK, EXIT_RUNTIME};

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AcceptanceCheck {
    /// Closed-form dominance of the exponential lower bound by the tail
    /// product over a (lambda, p, t) grid.
    CorollaryDominance {
        name: String,
        lambdas: Vec<f64>,
        p_values: Vec<f64>,
        t_max: usize,
        slack: f64,
    },
    /// Two-sided equality of the empirical majorant-commit CDF against its
    /// predicted tail product, in diagnostic mode.
    ClaimC3Distribution {
        name: String,
        t: usize,
        predicted: f64,
        tolerance_sigmas: f64,
        experiment: ExperimentConfig,
    },
    /// Per-trace replay domination: base selections never exceed
    /// majorant-only acceptances on the same uniform stream.
    Theorem1Domination {
        name: String,
        experiment: ExperimentConfig,
    },
    /// The certified policy alone keeps every trajectory inside its
    /// envelope.
    CertificateValidity {
        name: String,
        tolerance: f64,
        experiment: ExperimentConfig,
    },
    /// The settle-time count matches its hand value and suffices on every
    /// seed.
    TauFSoundness {
        name: String,
        d_max: f64,
        d_star: f64,
        expected_tau_f: usize,
        experiment: ExperimentConfig,
    },
    /// Full gated pipeline: the overshoot bound holds on every rollout.
    ClaimC1Overshoot {
        name: String,
        expected_delta: f64,
        delta_tolerance: f64,
        experiment: ExperimentConfig,
    },
    /// Reaching-time distribution dominates the tail products, one-sided.
    ClaimC2ReachingTime {
        name: String,
        tolerance_sigmas: f64,
        experiment: ExperimentConfig,
    },
    /// Fused return does not fall below the certified policy's, and the
    /// fused policy still reaches the goal.
    ChainFusionBenefit {
        name: String,
        tolerance_sigmas: f64,
        goal_threshold: f64,
        experiment: ExperimentConfig,
    },
    /// Byte-identical outputs across reruns and worker counts.
    Determinism {
        name: String,
        workers_a: usize,
        workers_b: usize,
        experiment: ExperimentConfig,
    },
}

impl AcceptanceCheck {
    pub fn name(&self) -> &str {
        match self {
            AcceptanceCheck::CorollaryDominance { name, .. }
            | AcceptanceCheck::ClaimC3Distribution { name, .. }
            | AcceptanceCheck::Theorem1Domination { name, .. }
            | AcceptanceCheck::CertificateValidity { name, .. }
            | AcceptanceCheck::TauFSoundness { name, .. }
            | AcceptanceCheck::ClaimC1Overshoot { name, .. }
            | AcceptanceCheck::ClaimC2ReachingTime { name, .. }
            | AcceptanceCheck::ChainFusionBenefit { name, .. }
            | AcceptanceCheck::Determinism { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn pass(name: &str, detail: String) -> Self {
        CheckResult {
            name: name.to_string(),
            passed: true,
            detail,
        }
    }

    fn fail(name: &str, detail: String) -> Self {
        CheckResult {
            name: name.to_string(),
            passed: false,
            detail,
        }
    }
}

/// Parse one acceptance config.
pub fn parse_check(text: &str) -> Result<AcceptanceCheck, CliError> {
    toml::from_str(text).map_err(|e| CliError::Acceptance(format!("acceptance config: {e}")))
}

/// Run every `*.toml` in the directory in filename order; exit 2 when the
/// directory is missing or holds no configs, 1 when any row fails.
pub fn cmd_acceptance(dir: &Path, workers: Option<usize>) -> Result<i32, CliError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::Acceptance(format!("cannot read acceptance directory {dir:?}: {e}")))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "toml"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Acceptance(format!(
            "acceptance directory {dir:?} contains no .toml configs"
        )));
    }
    let mut results = Vec::with_capacity(paths.len());
    for path in &paths {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Acceptance(format!("cannot read {path:?}: {e}")))?;
        let check = parse_check(&text)?;
        let result = crate::with_workers(workers, || run_check(&check));
        println!("{}", render_row(&result));
        results.push(result);
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!(
        "acceptance: {} passed, {} failed, {} total",
        results.len() - failed,
        failed,
        results.len()
    );
    Ok(if failed == 0 { EXIT_OK } else { EXIT_RUNTIME })
}

pub fn render_row(result: &CheckResult) -> String {
    format!(
        "[{}] {:<28} {}",
        if result.passed { "PASS" } else { "FAIL" },
        result.name,
        result.detail
    )
}

/// Execute one check; errors become failing rows rather than aborting the
/// table.
pub fn run_check(check: &AcceptanceCheck) -> CheckResult {
    match execute_check(check) {
        Ok(result) => result,
        Err(e) => CheckResult::fail(check.name(), format!("error: {e}")),
    }
}

fn execute_check(check: &AcceptanceCheck) -> Result<CheckResult, CliError> {
    match check {
        AcceptanceCheck::CorollaryDominance {
            name,
            lambdas,
            p_values,
            t_max,
            slack,
        } => corollary_dominance(name, lambdas, p_values, *t_max, *slack),
        AcceptanceCheck::ClaimC3Distribution {
            name,
            t,
            predicted,
            tolerance_sigmas,
            experiment,
        } => claim_c3(name, *t, *predicted, *tolerance_sigmas, experiment),
        AcceptanceCheck::Theorem1Domination { name, experiment } => {
            theorem1_domination(name, experiment)
        }
        AcceptanceCheck::CertificateValidity {
            name,
            tolerance,
            experiment,
        } => certificate_validity(name, *tolerance, experiment),
        AcceptanceCheck::TauFSoundness {
            name,
            d_max,
            d_star,
            expected_tau_f,
            experiment,
        } => tau_f_soundness(name, *d_max, *d_star, *expected_tau_f, experiment),
        AcceptanceCheck::ClaimC1Overshoot {
            name,
            expected_delta,
            delta_tolerance,
            experiment,
        } => claim_c1(name, *expected_delta, *delta_tolerance, experiment),
        AcceptanceCheck::ClaimC2ReachingTime {
            name,
            tolerance_sigmas,
            experiment,
        } => claim_c2(name, *tolerance_sigmas, experiment),
        AcceptanceCheck::ChainFusionBenefit {
            name,
            tolerance_sigmas,
            goal_threshold,
            experiment,
        } => chain_benefit(name, *tolerance_sigmas, *goal_threshold, experiment),
        AcceptanceCheck::Determinism {
            name,
            workers_a,
            workers_b,
            experiment,
        } => determinism(name, *workers_a, *workers_b, experiment),
    }
}

// ---------------------------------------------------------------------------
// Criterion implementations
// ---------------------------------------------------------------------------

fn corollary_dominance(
    name: &str,
    lambdas: &[f64],
    p_values: &[f64],
    t_max: usize,
    slack: f64,
) -> Result<CheckResult, CliError> {
    let mut checked = 0usize;
    let mut worst_gap = f64::INFINITY;
    for &lambda in lambdas {
        for &p in p_values {
            let schedule = GeometricSchedule::new(lambda, p)
                .map_err(|e| CliError::Acceptance(format!("grid point: {e}")))?;
            for t in 1..=t_max {
                if lambda.powi(t as i32) * p >= 1.0 {
                    continue;
                }
                let bound = corollary_lower_bound(lambda, p, t)?;
                let product = tail_product(&schedule, t)?;
                let gap = product + slack - bound;
                worst_gap = worst_gap.min(gap);
                if gap < 0.0 {
                    return Ok(CheckResult::fail(
                        name,
                        format!(
                            "violated at lambda={lambda} p={p} t={t}: \
                             bound {bound} > product {product} + {slack}"
                        ),
                    ));
                }
                checked += 1;
            }
        }
    }
    Ok(CheckResult::pass(
        name,
        format!("{checked} grid points dominated (worst margin {worst_gap:.3e})"),
    ))
}

fn claim_c3(
    name: &str,
    t: usize,
    predicted: f64,
    tolerance_sigmas: f64,
    experiment: &ExperimentConfig,
) -> Result<CheckResult, CliError> {
    use policy_fusion::config::{GateKind, IndicatorKind, ScheduleKind};
    if experiment.fusion.indicator != IndicatorKind::ForcedOn
        || experiment.schedule.gate != GateKind::None
        || experiment.schedule.kind != ScheduleKind::Geometric
    {
        return Ok(CheckResult::fail(
            name,
            "distribution equality requires diagnostic mode: indicator forced on, \
             ungated geometric schedule"
                .into(),
        ));
    }
    let pipeline = build_pipeline(experiment, None)?;
    let params = RunParams::from_pipeline(&pipeline)?;
    let outcomes = run_fused_outcomes(&pipeline, &params)?;
    let successes = outcomes.iter().filter(|o| o.commit_time <= t).count();
    let estimate = successes as f64 / params.n_rollouts as f64;
    let sigma = binomial_sigma(predicted, params.n_rollouts);
    let tolerance = tolerance_sigmas * sigma;
    let deviation = (estimate - predicted).abs();
    let detail = format!(
        "empirical CDF at t={t}: {estimate:.6} vs predicted {predicted:.6} \
         (|diff| {deviation:.6} <= {tolerance:.6}?)"
    );
    if deviation <= tolerance {
        Ok(CheckResult::pass(name, detail))
    } else {
        Ok(CheckResult::fail(name, detail))
    }
}

fn theorem1_domination(
    name: &str,
    experiment: &ExperimentConfig,
) -> Result<CheckResult, CliError> {
    let pipeline = build_pipeline(experiment, None)?;
    let params = RunParams::from_pipeline(&pipeline)?;
    let outcomes = run_fused_outcomes(&pipeline, &params)?;
    let stats = SwitchStatistics::from_outcomes(&outcomes);
    let total_base: usize = stats.n_base_selections.iter().sum();
    let violations = stats.domination_violations
        + stats.majorant_bound_violations
        + stats.consistency_violations;
    let detail = format!(
        "{} traces, {} base selections, {} domination / {} majorant-bound / {} consistency violations",
        params.n_rollouts,
        total_base,
        stats.domination_violations,
        stats.majorant_bound_violations,
        stats.consistency_violations
    );
    if violations == 0 && total_base > 0 {
        Ok(CheckResult::pass(name, detail))
    } else if total_base == 0 {
        Ok(CheckResult::fail(
            name,
            format!("{detail}; base policy never selected, check is vacuous"),
        ))
    } else {
        Ok(CheckResult::fail(name, detail))
    }
}

fn certificate_validity(
    name: &str,
    tolerance: f64,
    experiment: &ExperimentConfig,
) -> Result<CheckResult, CliError> {
    let pipeline = build_pipeline(experiment, None)?;
    let params = RunParams::from_pipeline(&pipeline)?;
    let certificate = pipeline.certificate.clone().ok_or_else(|| {
        CliError::Acceptance("certificate_validity requires a certified alternative".into())
    })?;
    let outcomes = run_plain_outcomes(
        pipeline.env.as_ref(),
        pipeline.alt.clone(),
        PolicySource::Alternative,
        &params,
        Some(&certificate),
        tolerance,
    )?;
    let violations: usize = outcomes.iter().map(|o| o.beta_violations).sum();
    let detail = format!(
        "{} rollouts x {} steps, {} envelope violations (tol {tolerance:.0e})",
        params.n_rollouts, params.horizon, violations
    );
    if violations == 0 {
        Ok(CheckResult::pass(name, detail))
    } else {
        Ok(CheckResult::fail(name, detail))
    }
}

fn tau_f_soundness(
    name: &str,
    d_max: f64,
    d_star: f64,
    expected_tau_f: usize,
    experiment: &ExperimentConfig,
) -> Result<CheckResult, CliError> {
    let pipeline = build_pipeline(experiment, None)?;
    let params = RunParams::from_pipeline(&pipeline)?;
    let certificate = pipeline.certificate.clone().ok_or_else(|| {
        CliError::Acceptance("tau_f_soundness requires a certified alternative".into())
    })?;
    let tau_f = compute_tau_f(&certificate, d_max, d_star)?;
    if tau_f != expected_tau_f {
        return Ok(CheckResult::fail(
            name,
            format!("computed tau_f = {tau_f}, expected {expected_tau_f}"),
        ));
    }
    if params.horizon < tau_f {
        return Ok(CheckResult::fail(
            name,
            format!("horizon {} is below tau_f {tau_f}", params.horizon),
        ));
    }
    // Drive the certified policy alone and examine the goal distance at
    // exactly step tau_f of every seeded rollout.
    let mut violations = 0usize;
    let mut worst = 0.0f64;
    for i in 0..params.n_rollouts as u64 {
        let mut streams = RolloutStreams::derive(params.seed, i);
        let mut policy = RolloutPolicy::Plain {
            policy: pipeline.alt.clone(),
            role: PolicySource::Alternative,
        };
        let trace = rollout(
            pipeline.env.as_ref(),
            &mut policy,
            params.horizon,
            &mut streams,
            &params.init,
        )
        .map_err(policy_fusion::montecarlo::MonteCarloError::from)?;
        let dist_at_tau = trace
            .goal_dists()
            .nth(tau_f)
            .expect("horizon covers tau_f");
        worst = worst.max(dist_at_tau);
        if dist_at_tau > d_star {
            violations += 1;
        }
    }
    let detail = format!(
        "tau_f = {tau_f}; goal_dist at step {tau_f} <= {d_star} on {} rollouts \
         ({violations} violations, worst {worst:.4})",
        params.n_rollouts
    );
    if violations == 0 {
        Ok(CheckResult::pass(name, detail))
    } else {
        Ok(CheckResult::fail(name, detail))
    }
}

fn claim_c1(
    name: &str,
    expected_delta: f64,
    delta_tolerance: f64,
    experiment: &ExperimentConfig,
) -> Result<CheckResult, CliError> {
    use policy_fusion::config::{GateKind, ScheduleKind};
    if experiment.schedule.kind != ScheduleKind::Gated
        && experiment.schedule.gate != GateKind::Superlevel
    {
        return Ok(CheckResult::fail(
            name,
            "overshoot boundedness requires the superlevel gate".into(),
        ));
    }
    let pipeline = build_pipeline(experiment, None)?;
    let params = RunParams::from_pipeline(&pipeline)?;
    let certificate = pipeline.certificate.clone().ok_or_else(|| {
        CliError::Acceptance("claim_c1_overshoot requires a certified alternative".into())
    })?;
    let d_star = params.d_star.ok_or_else(|| {
        CliError::Acceptance("claim_c1_overshoot requires run.d_star".into())
    })?;
    let quantities = compute_theorem_quantities(
        pipeline.env.as_ref(),
        pipeline.base_critic.as_ref(),
        &certificate,
        params.d_circ,
        d_star,
        params.resolution,
    )?;
    if (quantities.delta - expected_delta).abs() > delta_tolerance {
        return Ok(CheckResult::fail(
            name,
            format!(
                "computed delta = {} differs from expected {expected_delta} by more than {delta_tolerance}",
                quantities.delta
            ),
        ));
    }
    let outcomes = run_fused_outcomes(&pipeline, &params)?;
    let overshoots = outcomes
        .iter()
        .filter(|o| o.max_goal_dist > quantities.delta)
        .count();
    let fraction =
        (params.n_rollouts - overshoots) as f64 / params.n_rollouts as f64;
    let detail = format!(
        "delta = {}; fraction with max_t goal_dist <= delta: {fraction:.4} \
         over {} rollouts ({overshoots} overshoots)",
        quantities.delta, params.n_rollouts
    );
    if overshoots == 0 {
        Ok(CheckResult::pass(name, detail))
    } else {
        Ok(CheckResult::fail(name, detail))
    }
}

fn claim_c2(
    name: &str,
    tolerance_sigmas: f64,
    experiment: &ExperimentConfig,
) -> Result<CheckResult, CliError> {
    let pipeline = build_pipeline(experiment, None)?;
    let params = RunParams::from_pipeline(&pipeline)?;
    let certificate = pipeline.certificate.clone().ok_or_else(|| {
        CliError::Acceptance("claim_c2_reaching_time requires a certified alternative".into())
    })?;
    let d_star = params.d_star.ok_or_else(|| {
        CliError::Acceptance("claim_c2_reaching_time requires run.d_star".into())
    })?;
    let quantities = compute_theorem_quantities(
        pipeline.env.as_ref(),
        pipeline.base_critic.as_ref(),
        &certificate,
        params.d_circ,
        d_star,
        params.resolution,
    )?;
    let outcomes = run_fused_outcomes(&pipeline, &params)?;
    let majorant = pipeline.majorant_schedule();
    let mut detail = format!("tau_f = {};", quantities.tau_f);
    let mut all_pass = true;
    for &t in &params.t_grid {
        let deadline = t * quantities.tau_f;
        let successes = outcomes
            .iter()
            .filter(|o| o.reaching_time.is_some_and(|rt| rt <= deadline))
            .count();
        let estimate = successes as f64 / params.n_rollouts as f64;
        let predicted = tail_product(majorant.as_ref(), t)?;
        let floor = predicted - tolerance_sigmas * binomial_sigma(predicted, params.n_rollouts);
        let ok = estimate >= floor;
        all_pass &= ok;
        let _ = write!(
            detail,
            " t={t}: {estimate:.4} >= {floor:.4} ({})",
            if ok { "ok" } else { "LOW" }
        );
    }
    if all_pass {
        Ok(CheckResult::pass(name, detail))
    } else {
        Ok(CheckResult::fail(name, detail))
    }
}

fn chain_benefit(
    name: &str,
    tolerance_sigmas: f64,
    goal_threshold: f64,
    experiment: &ExperimentConfig,
) -> Result<CheckResult, CliError> {
    let pipeline = build_pipeline(experiment, None)?;
    let params = RunParams::from_pipeline(&pipeline)?;
    let certificate = pipeline.certificate.clone().ok_or_else(|| {
        CliError::Acceptance("chain_fusion_benefit requires a certified alternative".into())
    })?;
    let fused_outcomes = run_fused_outcomes(&pipeline, &params)?;
    let alt_outcomes = run_plain_outcomes(
        pipeline.env.as_ref(),
        pipeline.alt.clone(),
        PolicySource::Alternative,
        &params,
        None,
        0.0,
    )?;
    let fused_returns: Vec<f64> = fused_outcomes.iter().map(|o| o.discounted_return).collect();
    let alt_returns: Vec<f64> = alt_outcomes.iter().map(|o| o.discounted_return).collect();
    let (fused_mean, fused_se) = mean_and_stderr(&fused_returns);
    let (alt_mean, alt_se) = mean_and_stderr(&alt_returns);
    let sigma_diff = (fused_se * fused_se + alt_se * alt_se).sqrt();
    let return_ok = fused_mean >= alt_mean - tolerance_sigmas * sigma_diff;

    let reached = fused_outcomes
        .iter()
        .filter(|o| o.final_goal_dist <= goal_threshold)
        .count();
    let reach_fraction = reached as f64 / params.n_rollouts as f64;
    let required = 1.0 - certificate.eps;
    let reach_ok = reach_fraction >= required;

    let stats = SwitchStatistics::from_outcomes(&fused_outcomes);
    let indicator_live = stats.indicator_on_fraction > 0.0;

    let detail = format!(
        "fused return {fused_mean:.6} vs alternative {alt_mean:.6} \
         (floor {:.6}); reach {reach_fraction:.4} >= {required}; \
         indicator on {:.3}% of steps",
        alt_mean - tolerance_sigmas * sigma_diff,
        stats.indicator_on_fraction * 100.0
    );
    if return_ok && reach_ok && indicator_live {
        Ok(CheckResult::pass(name, detail))
    } else {
        Ok(CheckResult::fail(name, detail))
    }
}

fn determinism(
    name: &str,
    workers_a: usize,
    workers_b: usize,
    experiment: &ExperimentConfig,
) -> Result<CheckResult, CliError> {
    let tmp = tempfile::tempdir().map_err(|e| CliError::Acceptance(format!("tempdir: {e}")))?;
    let run_into = |label: &str, workers: usize| -> Result<PathBuf, CliError> {
        let dir = tmp.path().join(label);
        let mut config = experiment.clone();
        config.output.dir = Some(dir.clone());
        crate::with_workers(Some(workers), || execute_run(&config, None, true))?;
        Ok(dir)
    };
    let first = run_into("a1", workers_a)?;
    let second = run_into("a2", workers_a)?;
    let third = run_into("b", workers_b)?;

    for other in [&second, &third] {
        if let Some(diff) = compare_outputs(&first, other)? {
            return Ok(CheckResult::fail(name, diff));
        }
    }
    Ok(CheckResult::pass(
        name,
        format!(
            "outputs byte-identical across reruns and workers {workers_a} vs {workers_b} \
             (timestamp excluded)"
        ),
    ))
}

/// Compare two output directories byte-for-byte, with the summary's
/// timestamp field excluded from the comparison set.
fn compare_outputs(a: &Path, b: &Path) -> Result<Option<String>, CliError> {
    let mut files_a = collect_files(a)?;
    let mut files_b = collect_files(b)?;
    files_a.sort();
    files_b.sort();
    if files_a != files_b {
        return Ok(Some(format!(
            "file sets differ: {files_a:?} vs {files_b:?}"
        )));
    }
    for rel in &files_a {
        let pa = a.join(rel);
        let pb = b.join(rel);
        let bytes_a = std::fs::read(&pa)
            .map_err(|e| CliError::Acceptance(format!("read {pa:?}: {e}")))?;
        let bytes_b = std::fs::read(&pb)
            .map_err(|e| CliError::Acceptance(format!("read {pb:?}: {e}")))?;
        let (bytes_a, bytes_b) = if rel.ends_with("summary.json") {
            (strip_timestamp(&bytes_a)?, strip_timestamp(&bytes_b)?)
        } else {
            (bytes_a, bytes_b)
        };
        if bytes_a != bytes_b {
            return Ok(Some(format!("{rel} differs between runs")));
        }
    }
    Ok(None)
}

fn collect_files(root: &Path) -> Result<Vec<String>, CliError> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) -> std::io::Result<()> {
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else {
                out.push(
                    path.strip_prefix(root)
                        .expect("path under root")
                        .to_string_lossy()
                        .into_owned(),
                );
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(root, root, &mut out)
        .map_err(|e| CliError::Acceptance(format!("walk {root:?}: {e}")))?;
    Ok(out)
}

fn strip_timestamp(bytes: &[u8]) -> Result<Vec<u8>, CliError> {
    let mut value: serde_json::Value = serde_json::from_slice(bytes)
        .map_err(|e| CliError::Acceptance(format!("summary.json is not valid json: {e}")))?;
    if let Some(map) = value.as_object_mut() {
        map.remove("timestamp_unix_ms");
    }
    serde_json::to_vec(&value).map_err(|e| CliError::Acceptance(e.to_string()))
}

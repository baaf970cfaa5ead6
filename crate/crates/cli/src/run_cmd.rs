//! `run`: execute the configured experiment and write its outputs.
//!
//! Outputs: `summary.json` (aggregate reports; the timestamp field is the
//! only non-deterministic byte), `rollouts.csv` (per-rollout statistics),
//! `tabular_critics.json` (value-vector audit, chain runs), and under
//! `traces/` one CSV and one JSON-lines file per rollout when
//! `output.write_traces` is set.

use std::fs;
use std::path::{Path, PathBuf};

use policy_fusion::config::{build_pipeline, ExperimentConfig, Pipeline};
use policy_fusion::montecarlo::{run_experiment, write_rollout_stats_csv, RunParams};
use policy_fusion::rngs::RolloutStreams;
use policy_fusion::rollout::{rollout, InitialState, RolloutPolicy};
use policy_fusion::trace::{write_trace_csv, write_trace_jsonl};

use crate::CliError;

pub struct RunOutput {
    pub output_dir: PathBuf,
    pub summary_path: PathBuf,
}

/// Load, validate, and execute a run config.
pub fn cmd_run(
    config_path: &Path,
    seed_override: Option<u64>,
    output_override: Option<PathBuf>,
    workers: Option<usize>,
) -> Result<RunOutput, CliError> {
    let mut config = ExperimentConfig::load(config_path)?;
    if let Some(seed) = seed_override {
        config.run.seed = seed;
    }
    if let Some(dir) = output_override {
        config.output.dir = Some(dir);
    }
    let base_dir = config_path.parent().map(Path::to_path_buf);
    crate::with_workers(workers, || execute_run(&config, base_dir.as_deref(), true))
}

/// Execute an already-parsed config. `stamp_time` controls whether the
/// summary carries a wall-clock timestamp (determinism comparisons strip
/// it either way).
pub fn execute_run(
    config: &ExperimentConfig,
    base_dir: Option<&Path>,
    stamp_time: bool,
) -> Result<RunOutput, CliError> {
    let pipeline = build_pipeline(config, base_dir)?;
    let output_dir = config
        .output
        .dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&output_dir).map_err(|source| CliError::OutputIo {
        path: output_dir.clone(),
        source,
    })?;

    let (mut summary, outcomes) = run_experiment(&pipeline)?;
    if stamp_time {
        summary.timestamp_unix_ms = Some(
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
        );
    }

    let summary_path = output_dir.join("summary.json");
    let summary_json =
        serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(&summary_path, summary_json + "\n").map_err(|source| CliError::OutputIo {
        path: summary_path.clone(),
        source,
    })?;

    let stats_path = output_dir.join("rollouts.csv");
    let mut stats_buf = Vec::new();
    write_rollout_stats_csv(&outcomes, &mut stats_buf)?;
    fs::write(&stats_path, stats_buf).map_err(|source| CliError::OutputIo {
        path: stats_path.clone(),
        source,
    })?;

    if !pipeline.tabular_dumps.is_empty() {
        let audit_path = output_dir.join("tabular_critics.json");
        let audit: serde_json::Value = pipeline
            .tabular_dumps
            .iter()
            .map(|(role, json)| {
                (
                    role.clone(),
                    serde_json::from_str::<serde_json::Value>(json)
                        .expect("tabular dump is valid json"),
                )
            })
            .collect::<serde_json::Map<_, _>>()
            .into();
        fs::write(
            &audit_path,
            serde_json::to_string_pretty(&audit).expect("audit serializes") + "\n",
        )
        .map_err(|source| CliError::OutputIo {
            path: audit_path.clone(),
            source,
        })?;
    }

    if config.output.write_traces {
        write_all_traces(&pipeline, &output_dir)?;
    }

    Ok(RunOutput {
        output_dir,
        summary_path,
    })
}

/// Replay every rollout with the same substreams and serialize its fused
/// records. Trajectories are identical to the summarized run because both
/// paths share the stepping core and stream derivation.
fn write_all_traces(pipeline: &Pipeline, output_dir: &Path) -> Result<(), CliError> {
    let params = RunParams::from_pipeline(pipeline).map_err(CliError::Config)?;
    let trace_dir = output_dir.join("traces");
    fs::create_dir_all(&trace_dir).map_err(|source| CliError::OutputIo {
        path: trace_dir.clone(),
        source,
    })?;
    let width = (params.n_rollouts.max(2) - 1).to_string().len();
    for i in 0..params.n_rollouts as u64 {
        let mut streams = RolloutStreams::derive(params.seed, i);
        let s0 = policy_fusion::rollout::sample_initial_state(
            pipeline.env.as_ref(),
            &params.init,
            &mut streams,
        );
        let schedule = pipeline.schedule_for(&s0);
        let fused = pipeline
            .fused_for(&s0, schedule)
            .map_err(policy_fusion::montecarlo::MonteCarloError::from)?;
        let mut policy = RolloutPolicy::Fused(fused);
        let trace = rollout(
            pipeline.env.as_ref(),
            &mut policy,
            params.horizon,
            &mut streams,
            &InitialState::Fixed(s0),
        )
        .map_err(policy_fusion::montecarlo::MonteCarloError::from)?;
        let records: Vec<_> = trace
            .steps
            .iter()
            .filter_map(|s| s.fusion.clone())
            .collect();
        let stem = format!("rollout_{i:0width$}");
        let csv_path = trace_dir.join(format!("{stem}.csv"));
        let mut csv_buf = Vec::new();
        write_trace_csv(&records, &mut csv_buf)?;
        fs::write(&csv_path, csv_buf).map_err(|source| CliError::OutputIo {
            path: csv_path,
            source,
        })?;
        let jsonl_path = trace_dir.join(format!("{stem}.jsonl"));
        let mut jsonl_buf = Vec::new();
        write_trace_jsonl(&records, &mut jsonl_buf)?;
        fs::write(&jsonl_path, jsonl_buf).map_err(|source| CliError::OutputIo {
            path: jsonl_path,
            source,
        })?;
    }
    Ok(())
}

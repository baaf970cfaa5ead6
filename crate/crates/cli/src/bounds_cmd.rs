//! `verify-bounds`: closed-form bound report for a configured pipeline.
//!
//! Emits `bounds.json`: the spatial bounds, the overshoot bound, the
//! settle-time step count, the majorant tail products over the probe grid,
//! the exponential lower bounds, and a dominance verdict checking
//! `corollary <= tail product + 1e-12` at every probe time.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use policy_fusion::bounds::{
    compute_theorem_quantities, corollary_lower_bound, tail_product, BoundsError,
    TheoremQuantities,
};
use policy_fusion::config::{build_pipeline, ExperimentConfig};

use crate::CliError;

pub const DOMINANCE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct BoundsInputs {
    pub env_kind: String,
    pub lambda: f64,
    pub p_relax: f64,
    pub d_circ: f64,
    pub d_star: f64,
    pub resolution: usize,
    pub t_grid: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TailEntry {
    pub t: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CorollaryEntry {
    pub t: usize,
    pub value: f64,
    pub dominated: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsReport {
    pub schema_version: &'static str,
    pub config_hash: String,
    pub master_seed: u64,
    pub inputs: BoundsInputs,
    pub v_min: f64,
    pub d_pbar: f64,
    pub d_max: f64,
    pub delta: f64,
    pub tau_f: usize,
    pub tail_products: Vec<TailEntry>,
    pub corollary_bounds: Vec<CorollaryEntry>,
    pub dominance: &'static str,
}

impl BoundsReport {
    pub fn dominance_pass(&self) -> bool {
        self.dominance == "pass"
    }
}

/// Build the report from an already-parsed config.
pub fn bounds_report(
    config: &ExperimentConfig,
    base_dir: Option<&Path>,
) -> Result<BoundsReport, CliError> {
    let pipeline = build_pipeline(config, base_dir)?;
    let certificate = pipeline.certificate.as_ref().ok_or_else(|| {
        CliError::Config(policy_fusion::config::ConfigError::Invalid(
            "verify-bounds requires a certified alternative policy".into(),
        ))
    })?;
    let d_star = config.run.d_star.ok_or_else(|| {
        CliError::Config(policy_fusion::config::ConfigError::Invalid(
            "verify-bounds requires run.d_star".into(),
        ))
    })?;
    let quantities: TheoremQuantities = compute_theorem_quantities(
        pipeline.env.as_ref(),
        pipeline.base_critic.as_ref(),
        certificate,
        config.run.d_circ,
        d_star,
        config.run.resolution,
    )?;

    let schedule = pipeline.majorant_schedule();
    let mut tail_products = Vec::new();
    let mut corollary_bounds = Vec::new();
    let mut dominance_pass = true;
    for &t in &config.run.t_grid {
        let tp = tail_product(schedule.as_ref(), t)?;
        tail_products.push(TailEntry { t, value: tp });
        if t >= 1 {
            match corollary_lower_bound(config.schedule.lambda, config.schedule.p_relax, t) {
                Ok(value) => {
                    let dominated = value <= tp + DOMINANCE_SLACK;
                    dominance_pass &= dominated;
                    corollary_bounds.push(CorollaryEntry { t, value, dominated });
                }
                Err(BoundsError::CorollaryUndefined { .. }) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }

    Ok(BoundsReport {
        schema_version: policy_fusion::SCHEMA_VERSION,
        config_hash: pipeline.config_hash.clone(),
        master_seed: config.run.seed,
        inputs: BoundsInputs {
            env_kind: match &config.env {
                policy_fusion::config::EnvConfig::Scalar { .. } => "scalar".into(),
                policy_fusion::config::EnvConfig::DoubleIntegrator { .. } => {
                    "double_integrator".into()
                }
                policy_fusion::config::EnvConfig::Chain { .. } => "chain".into(),
            },
            lambda: config.schedule.lambda,
            p_relax: config.schedule.p_relax,
            d_circ: config.run.d_circ,
            d_star,
            resolution: config.run.resolution,
            t_grid: config.run.t_grid.clone(),
        },
        v_min: quantities.v_min,
        d_pbar: quantities.d_pbar,
        d_max: quantities.d_max,
        delta: quantities.delta,
        tau_f: quantities.tau_f,
        tail_products,
        corollary_bounds,
        dominance: if dominance_pass { "pass" } else { "fail" },
    })
}

/// Load a config, emit `bounds.json`, and return the report.
pub fn cmd_verify_bounds(
    config_path: &Path,
    output_override: Option<PathBuf>,
) -> Result<BoundsReport, CliError> {
    let mut config = ExperimentConfig::load(config_path)?;
    if let Some(dir) = output_override {
        config.output.dir = Some(dir);
    }
    let report = bounds_report(&config, config_path.parent())?;
    let output_dir = config
        .output
        .dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&output_dir).map_err(|source| CliError::OutputIo {
        path: output_dir.clone(),
        source,
    })?;
    let path = output_dir.join("bounds.json");
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(&path, json + "\n").map_err(|source| CliError::OutputIo { path, source })?;
    Ok(report)
}

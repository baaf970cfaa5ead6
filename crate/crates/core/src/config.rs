//! Experiment configuration: one structured TOML file per experiment.
//!
//! Flags may only override the seed, worker count, and output directory;
//! everything else lives in the config so a run is reproducible from the
//! artifact alone. Every output embeds the SHA-256 hash of the canonical
//! serialized config next to the master seed.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::critics::{make_tabular_critic, Critic, GaussianBumpCritic};
use crate::env::{
    ChainSpec, ContractiveScalarEnv, FiniteChainEnv, Mdp, NoisyDoubleIntegratorEnv,
};
use crate::fusion::{FusedPolicy, IndicatorMode};
use crate::kl::{make_chain_certified_policy, make_scalar_certified_policy, KlCertificate};
use crate::policies::{
    ChainPolicy, OutwardDriftPolicy, PdPolicy, StationaryPolicy, ZeroPolicy,
};
use crate::rollout::InitialState;
use crate::schedule::{GatedSchedule, GeometricSchedule, Schedule};
use crate::state::{Norm, State};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

// ---------------------------------------------------------------------------
// Schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub policies: PoliciesConfig,
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub fusion: FusionConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvConfig {
    Scalar {
        w_max: f64,
        goal_radius: f64,
        #[serde(default = "default_a_max")]
        a_max: f64,
    },
    DoubleIntegrator {
        dt: f64,
        w_max: f64,
        a_max: f64,
        goal_radius: f64,
    },
    Chain {
        /// JSON file with the explicit transition tensor (row-major,
        /// probabilities as decimals), resolved relative to the config file.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        spec_path: Option<PathBuf>,
        /// Name of a built-in chain; currently `default8`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        builtin: Option<String>,
    },
}

fn default_a_max() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoliciesConfig {
    pub base: PolicyConfig,
    pub alt: PolicyConfig,
    pub base_critic: CriticConfig,
    pub alt_critic: CriticConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyConfig {
    /// `a = c*s` with the scalar environment's contraction certificate.
    ProportionalCertified { c: f64 },
    /// Drifts away from the goal inside `|s| < a_max`, bounded outside.
    OutwardDrift { drift: f64 },
    Zero,
    /// PD feedback for the double integrator.
    Pd { kx: f64, kv: f64 },
    /// Step toward the nearest goal state; certified on chains whose
    /// goal-ward actions are deterministic.
    ChainTowardGoal,
    /// One-step-lookahead reward greedy.
    ChainRewardGreedy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CriticConfig {
    Constant {
        value: f64,
    },
    GaussianBump {
        center: Vec<f64>,
        scale: f64,
    },
    /// Exact policy evaluation of the named policy on the chain.
    Tabular {
        of: CriticTarget,
        gamma: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticTarget {
    Base,
    Alt,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub kind: ScheduleKind,
    pub lambda: f64,
    pub p_relax: f64,
    #[serde(default)]
    pub gate: GateKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Geometric,
    /// Geometric with the superlevel gate.
    Gated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateKind {
    #[default]
    None,
    Superlevel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionConfig {
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default = "default_epsilon_norm")]
    pub epsilon_norm: f64,
    #[serde(default)]
    pub indicator: IndicatorKind,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            nu: default_nu(),
            epsilon_norm: default_epsilon_norm(),
            indicator: IndicatorKind::Computed,
        }
    }
}

fn default_nu() -> f64 {
    1e-3
}

fn default_epsilon_norm() -> f64 {
    1e-8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndicatorKind {
    #[default]
    Computed,
    /// Diagnostic mode: the indicator is forced to 1 so acceptance draws
    /// follow the majorant law exactly.
    ForcedOn,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub horizon: usize,
    pub n_rollouts: usize,
    pub seed: u64,
    /// Bound on the initial goal distance.
    pub d_circ: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_star: Option<f64>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub init: InitKind,
    /// Fixed initial state, required when `init = "fixed"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s0: Option<Vec<f64>>,
    /// Grid of tail-product probe times for reaching-time reports.
    #[serde(default = "default_t_grid")]
    pub t_grid: Vec<usize>,
    /// Points per axis for grid extremization.
    #[serde(default = "default_resolution")]
    pub resolution: usize,
}

fn default_gamma() -> f64 {
    0.99
}

fn default_t_grid() -> Vec<usize> {
    vec![0, 1, 2, 5, 10]
}

fn default_resolution() -> usize {
    1001
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    #[default]
    WithinDCirc,
    Default,
    Fixed,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub write_traces: bool,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// SHA-256 over the canonical JSON serialization. The output section is
    /// excluded: it routes artifacts without affecting results, and the same
    /// experiment must hash identically wherever it writes.
    pub fn hash(&self) -> String {
        let mut canonical_config = self.clone();
        canonical_config.output = OutputConfig::default();
        let canonical = serde_json::to_string(&canonical_config).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let mut out = String::with_capacity(64);
        for byte in digest {
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

/// Everything a run needs, built and validated once, shareable across
/// parallel rollouts.
pub struct Pipeline {
    pub env: Arc<dyn Mdp>,
    pub base: Arc<dyn StationaryPolicy>,
    pub alt: Arc<dyn StationaryPolicy>,
    pub base_critic: Arc<dyn Critic>,
    pub alt_critic: Arc<dyn Critic>,
    inner_schedule: Arc<GeometricSchedule>,
    gated: bool,
    /// The alternative policy's certificate, when its config kind carries
    /// one.
    pub certificate: Option<KlCertificate>,
    pub nu: f64,
    pub epsilon_norm: f64,
    pub indicator_mode: IndicatorMode,
    pub config: ExperimentConfig,
    pub config_hash: String,
    /// Audit dump of any tabular critics: (role, serialized values).
    pub tabular_dumps: Vec<(String, String)>,
}

impl Pipeline {
    /// The state-independent majorant carrier (gating never changes it).
    pub fn majorant_schedule(&self) -> Arc<dyn Schedule> {
        self.inner_schedule.clone()
    }

    /// Schedule instance for a rollout starting at `s0`.
    pub fn schedule_for(&self, s0: &State) -> Arc<dyn Schedule> {
        if self.gated {
            Arc::new(GatedSchedule::new(
                self.inner_schedule.clone(),
                self.base_critic.clone(),
                s0,
            ))
        } else {
            self.inner_schedule.clone()
        }
    }

    pub fn fused_for(
        &self,
        s0: &State,
        schedule: Arc<dyn Schedule>,
    ) -> Result<FusedPolicy, crate::critics::CriticError> {
        FusedPolicy::new(
            self.base.clone(),
            self.alt.clone(),
            self.base_critic.clone(),
            self.alt_critic.clone(),
            schedule,
            s0,
            self.nu,
            self.epsilon_norm,
            self.indicator_mode,
        )
    }

    pub fn initial_state_spec(&self) -> Result<InitialState, ConfigError> {
        let run = &self.config.run;
        Ok(match run.init {
            InitKind::WithinDCirc => InitialState::WithinGoalDist(run.d_circ),
            InitKind::Default => InitialState::Default,
            InitKind::Fixed => {
                let coords = run
                    .s0
                    .as_ref()
                    .ok_or_else(|| invalid("run.init = \"fixed\" requires run.s0"))?;
                if coords.len() != self.env.state_dim() {
                    return Err(invalid(format!(
                        "run.s0 has dimension {}, environment expects {}",
                        coords.len(),
                        self.env.state_dim()
                    )));
                }
                InitialState::Fixed(State::new(coords.as_slice()))
            }
        })
    }
}

/// Validate a parsed config and construct its pipeline. `base_dir` resolves
/// relative paths (the chain tensor file).
pub fn build_pipeline(
    config: &ExperimentConfig,
    base_dir: Option<&Path>,
) -> Result<Pipeline, ConfigError> {
    let run = &config.run;
    if run.horizon == 0 {
        return Err(invalid("run.horizon must be at least 1"));
    }
    if run.n_rollouts == 0 {
        return Err(invalid("run.n_rollouts must be at least 1"));
    }
    if !(run.d_circ >= 0.0) {
        return Err(invalid("run.d_circ must be non-negative"));
    }
    if let Some(d_star) = run.d_star {
        if !(d_star > 0.0) {
            return Err(invalid("run.d_star must be positive"));
        }
    }
    if !(0.0..1.0).contains(&run.gamma) {
        return Err(invalid("run.gamma must lie in [0, 1)"));
    }
    if run.resolution < 2 {
        return Err(invalid("run.resolution must be at least 2"));
    }
    let sched = &config.schedule;
    let inner_schedule = Arc::new(
        GeometricSchedule::new(sched.lambda, sched.p_relax)
            .map_err(|e| invalid(format!("schedule: {e}")))?,
    );
    let gated = match (sched.kind, sched.gate) {
        (ScheduleKind::Geometric, GateKind::None) => false,
        (ScheduleKind::Geometric, GateKind::Superlevel) => true,
        (ScheduleKind::Gated, _) => true,
    };
    let fusion = &config.fusion;
    if !(fusion.nu > 0.0) {
        return Err(invalid("fusion.nu must be positive"));
    }
    if !(fusion.epsilon_norm > 0.0) {
        return Err(invalid("fusion.epsilon_norm must be positive"));
    }
    let indicator_mode = match fusion.indicator {
        IndicatorKind::Computed => IndicatorMode::Computed,
        IndicatorKind::ForcedOn => IndicatorMode::ForcedOn,
    };

    let mut tabular_dumps = Vec::new();
    let built = match &config.env {
        EnvConfig::Scalar {
            w_max,
            goal_radius,
            a_max,
        } => {
            let env = ContractiveScalarEnv::new(*w_max, *goal_radius, *a_max)
                .map_err(|e| invalid(format!("env: {e}")))?;
            build_continuous(config, ContinuousEnv::Scalar(env))?
        }
        EnvConfig::DoubleIntegrator {
            dt,
            w_max,
            a_max,
            goal_radius,
        } => {
            let env = NoisyDoubleIntegratorEnv::new(*dt, *w_max, *a_max, *goal_radius)
                .map_err(|e| invalid(format!("env: {e}")))?;
            build_continuous(config, ContinuousEnv::DoubleIntegrator(env))?
        }
        EnvConfig::Chain { spec_path, builtin } => {
            let env = match (spec_path, builtin) {
                (Some(path), None) => {
                    let resolved = match base_dir {
                        Some(dir) if path.is_relative() => dir.join(path),
                        _ => path.clone(),
                    };
                    let text =
                        std::fs::read_to_string(&resolved).map_err(|source| ConfigError::Io {
                            path: resolved.clone(),
                            source,
                        })?;
                    let spec = ChainSpec::from_json(&text)
                        .map_err(|e| invalid(format!("env.spec_path: {e}")))?;
                    FiniteChainEnv::from_spec(&spec).map_err(|e| invalid(format!("env: {e}")))?
                }
                (None, Some(name)) if name == "default8" => FiniteChainEnv::default_eight_state(),
                (None, Some(name)) => {
                    return Err(invalid(format!("env.builtin: unknown chain \"{name}\"")))
                }
                _ => {
                    return Err(invalid(
                        "env.kind = \"chain\" requires exactly one of spec_path or builtin",
                    ))
                }
            };
            build_chain(config, env, &mut tabular_dumps)?
        }
    };

    Ok(Pipeline {
        env: built.env,
        base: built.base,
        alt: built.alt,
        base_critic: built.base_critic,
        alt_critic: built.alt_critic,
        inner_schedule,
        gated,
        certificate: built.certificate,
        nu: fusion.nu,
        epsilon_norm: fusion.epsilon_norm,
        indicator_mode,
        config: config.clone(),
        config_hash: config.hash(),
        tabular_dumps,
    })
}

struct BuiltParts {
    env: Arc<dyn Mdp>,
    base: Arc<dyn StationaryPolicy>,
    alt: Arc<dyn StationaryPolicy>,
    base_critic: Arc<dyn Critic>,
    alt_critic: Arc<dyn Critic>,
    certificate: Option<KlCertificate>,
}

enum ContinuousEnv {
    Scalar(ContractiveScalarEnv),
    DoubleIntegrator(NoisyDoubleIntegratorEnv),
}

fn build_continuous(config: &ExperimentConfig, env: ContinuousEnv) -> Result<BuiltParts, ConfigError> {
    let (a_max, dim, norm) = match &env {
        ContinuousEnv::Scalar(e) => (e.a_max, 1, e.norm()),
        ContinuousEnv::DoubleIntegrator(e) => (e.a_max, 2, e.norm()),
    };
    let build_policy = |which: &str, cfg: &PolicyConfig| -> Result<
        (Arc<dyn StationaryPolicy>, Option<KlCertificate>),
        ConfigError,
    > {
        match (cfg, &env) {
            (PolicyConfig::ProportionalCertified { c }, ContinuousEnv::Scalar(scalar)) => {
                let certified = make_scalar_certified_policy(*c, scalar)
                    .map_err(|e| invalid(format!("policies.{which}: {e}")))?;
                Ok((certified.policy, Some(certified.certificate)))
            }
            (PolicyConfig::ProportionalCertified { .. }, _) => Err(invalid(format!(
                "policies.{which}: proportional_certified requires the scalar environment"
            ))),
            (PolicyConfig::OutwardDrift { drift }, _) => Ok((
                Arc::new(OutwardDriftPolicy {
                    drift: *drift,
                    a_max,
                }),
                None,
            )),
            (PolicyConfig::Zero, _) => Ok((Arc::new(ZeroPolicy), None)),
            (PolicyConfig::Pd { kx, kv }, ContinuousEnv::DoubleIntegrator(_)) => Ok((
                Arc::new(PdPolicy {
                    kx: *kx,
                    kv: *kv,
                    a_max,
                }),
                None,
            )),
            (PolicyConfig::Pd { .. }, _) => Err(invalid(format!(
                "policies.{which}: pd requires the double integrator environment"
            ))),
            (PolicyConfig::ChainTowardGoal | PolicyConfig::ChainRewardGreedy, _) => Err(invalid(
                format!("policies.{which}: chain policies require the chain environment"),
            )),
        }
    };
    let (base, _) = build_policy("base", &config.policies.base)?;
    let (alt, certificate) = build_policy("alt", &config.policies.alt)?;
    let build_critic = |which: &str, cfg: &CriticConfig| -> Result<Arc<dyn Critic>, ConfigError> {
        match cfg {
            CriticConfig::Constant { value } => Ok(Arc::new(crate::critics::ConstantCritic(*value))),
            CriticConfig::GaussianBump { center, scale } => {
                if center.len() != dim {
                    return Err(invalid(format!(
                        "policies.{which}: gaussian_bump center has dimension {}, \
                         environment expects {dim}",
                        center.len()
                    )));
                }
                Ok(Arc::new(
                    GaussianBumpCritic::new(State::new(center.as_slice()), *scale, norm)
                        .map_err(|e| invalid(format!("policies.{which}: {e}")))?,
                ))
            }
            CriticConfig::Tabular { .. } => Err(invalid(format!(
                "policies.{which}: tabular critics require the chain environment"
            ))),
        }
    };
    let base_critic = build_critic("base_critic", &config.policies.base_critic)?;
    let alt_critic = build_critic("alt_critic", &config.policies.alt_critic)?;
    let env: Arc<dyn Mdp> = match env {
        ContinuousEnv::Scalar(e) => Arc::new(e),
        ContinuousEnv::DoubleIntegrator(e) => Arc::new(e),
    };
    Ok(BuiltParts {
        env,
        base,
        alt,
        base_critic,
        alt_critic,
        certificate,
    })
}

fn build_chain(
    config: &ExperimentConfig,
    env: FiniteChainEnv,
    tabular_dumps: &mut Vec<(String, String)>,
) -> Result<BuiltParts, ConfigError> {
    let build_policy = |which: &str,
                        cfg: &PolicyConfig|
     -> Result<(Arc<dyn StationaryPolicy>, Option<KlCertificate>, ChainPolicy), ConfigError> {
        match cfg {
            PolicyConfig::ChainTowardGoal => {
                let certified = make_chain_certified_policy(&env)
                    .map_err(|e| invalid(format!("policies.{which}: {e}")))?;
                let concrete = ChainPolicy::toward_goal(&env);
                Ok((certified.policy, Some(certified.certificate), concrete))
            }
            PolicyConfig::ChainRewardGreedy => {
                let concrete = ChainPolicy::reward_lookahead_greedy(&env);
                Ok((Arc::new(concrete.clone()), None, concrete))
            }
            _ => Err(invalid(format!(
                "policies.{which}: the chain environment requires chain policies"
            ))),
        }
    };
    let (base, _, base_concrete) = build_policy("base", &config.policies.base)?;
    let (alt, certificate, alt_concrete) = build_policy("alt", &config.policies.alt)?;
    let mut build_critic = |which: &str, cfg: &CriticConfig| -> Result<Arc<dyn Critic>, ConfigError> {
        match cfg {
            CriticConfig::Constant { value } => Ok(Arc::new(crate::critics::ConstantCritic(*value))),
            CriticConfig::GaussianBump { center, scale } => Ok(Arc::new(
                GaussianBumpCritic::new(State::new(center.as_slice()), *scale, Norm::Sup)
                    .map_err(|e| invalid(format!("policies.{which}: {e}")))?,
            )),
            CriticConfig::Tabular { of, gamma } => {
                let target = match of {
                    CriticTarget::Base => &base_concrete,
                    CriticTarget::Alt => &alt_concrete,
                };
                let critic = make_tabular_critic(&env, target, *gamma)
                    .map_err(|e| invalid(format!("policies.{which}: {e}")))?;
                tabular_dumps.push((which.to_string(), critic.to_json()));
                Ok(Arc::new(critic))
            }
        }
    };
    let base_critic = build_critic("base_critic", &config.policies.base_critic)?;
    let alt_critic = build_critic("alt_critic", &config.policies.alt_critic)?;
    Ok(BuiltParts {
        env: Arc::new(env),
        base,
        alt,
        base_critic,
        alt_critic,
        certificate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SCALAR_TOML: &str = r#"
        [env]
        kind = "scalar"
        w_max = 0.1
        goal_radius = 0.2

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
        lambda = 0.5
        p_relax = 0.8

        [run]
        horizon = 64
        n_rollouts = 100
        seed = 7
        d_circ = 10.0
        d_star = 1.0
        gamma = 0.9
    "#;

    #[test]
    fn scalar_config_builds() {
        let config = ExperimentConfig::from_toml_str(SCALAR_TOML).unwrap();
        let pipeline = build_pipeline(&config, None).unwrap();
        assert!(pipeline.certificate.is_some());
        assert!(!pipeline.gated);
        assert_eq!(pipeline.config_hash.len(), 64);
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let config = ExperimentConfig::from_toml_str(SCALAR_TOML).unwrap();
        let mut other = config.clone();
        assert_eq!(config.hash(), other.hash());
        other.run.seed = 8;
        assert_ne!(config.hash(), other.hash());
    }

    #[test]
    fn inadmissible_certificate_is_rejected_citing_inequality() {
        let text = SCALAR_TOML.replace("c = 0.36787944117144233", "c = 0.9").replace(
            "goal_radius = 0.2",
            "goal_radius = 0.15",
        );
        let config = ExperimentConfig::from_toml_str(&text).unwrap();
        let Err(err) = build_pipeline(&config, None) else {
            panic!("inadmissible certificate accepted");
        };
        let msg = err.to_string();
        assert!(msg.contains("admissibility"), "unexpected message: {msg}");
        assert!(msg.contains("w_max / (1 - c)"), "unexpected message: {msg}");
    }

    #[test]
    fn parse_errors_carry_line_information() {
        let err = ExperimentConfig::from_toml_str("[env]\nkind = \"scalar\"\nw_max = \"oops\"\n")
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line"), "no line anchor in: {msg}");
    }

    #[test]
    fn chain_config_with_tabular_critics_builds_and_dumps() {
        let text = r#"
            [env]
            kind = "chain"
            builtin = "default8"

            [policies.base]
            kind = "chain_reward_greedy"
            [policies.alt]
            kind = "chain_toward_goal"
            [policies.base_critic]
            kind = "tabular"
            of = "base"
            gamma = 0.9
            [policies.alt_critic]
            kind = "tabular"
            of = "alt"
            gamma = 0.9

            [schedule]
            kind = "geometric"
            lambda = 0.8
            p_relax = 0.8

            [run]
            horizon = 200
            n_rollouts = 50
            seed = 1
            d_circ = 7.0
            d_star = 0.5
            gamma = 0.9
        "#;
        let config = ExperimentConfig::from_toml_str(text).unwrap();
        let pipeline = build_pipeline(&config, None).unwrap();
        assert_eq!(pipeline.tabular_dumps.len(), 2);
        assert!(pipeline.certificate.is_some());
        // All tabular values stay inside (0, 1].
        for (_, dump) in &pipeline.tabular_dumps {
            let parsed: serde_json::Value = serde_json::from_str(dump).unwrap();
            for v in parsed["values"].as_array().unwrap() {
                let v = v.as_f64().unwrap();
                assert!(v > 0.0 && v <= 1.0, "tabular value {v} outside (0, 1]");
            }
        }
    }

    #[test]
    fn gated_kind_and_gate_key_both_enable_gating() {
        let base = ExperimentConfig::from_toml_str(SCALAR_TOML).unwrap();
        let mut gated_kind = base.clone();
        gated_kind.schedule.kind = ScheduleKind::Gated;
        assert!(build_pipeline(&gated_kind, None).unwrap().gated);
        let mut gate_key = base;
        gate_key.schedule.gate = GateKind::Superlevel;
        assert!(build_pipeline(&gate_key, None).unwrap().gated);
    }
}

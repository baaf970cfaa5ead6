//! Two-policy switching with reference-value bookkeeping.
//!
//! At every step the fused policy compares the two critics' improvements
//! over their best observed values, normalized by those references. When the
//! base critic's relative improvement strictly exceeds the alternative's,
//! the base policy is used with the schedule's acceptance probability;
//! otherwise the certified alternative acts. References ratchet upward by at
//! least `nu` per update, and the acceptance draw is taken every step so a
//! trace can be replayed against the majorant-only rule on the same uniform
//! stream.

use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::critics::{checked_value, Critic, CriticError};
use crate::policies::StationaryPolicy;
use crate::rngs::RolloutStreams;
use crate::schedule::Schedule;
use crate::state::{Action, State};

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("at step {step}: {source}")]
    Critic {
        step: usize,
        #[source]
        source: CriticError,
    },
    #[error("at step {step}: {source_policy} policy produced a non-finite action {action}")]
    NonFiniteAction {
        step: usize,
        source_policy: &'static str,
        action: String,
    },
    #[error("time index mismatch: fused policy is at t = {expected}, caller passed t = {got}")]
    TimeIndexMismatch { expected: usize, got: usize },
}

/// Best observed critic values along the current rollout, plus the update
/// threshold. Both references are non-decreasing and every increase is by at
/// least `nu`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueReference {
    pub v_base_ref: f64,
    pub v_alt_ref: f64,
    pub nu: f64,
}

/// Which policy produced the action at a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicySource {
    Base,
    Alternative,
}

impl PolicySource {
    pub fn label(&self) -> &'static str {
        match self {
            PolicySource::Base => "base",
            PolicySource::Alternative => "alternative",
        }
    }
}

/// Complete record of one fused decision. `base_ref`/`alt_ref` are the
/// references in force when the deltas were computed (pre-update), so
/// `delta = critic(s) - ref` holds exactly on the stored values.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionStepRecord {
    pub time: usize,
    pub delta_base: f64,
    pub delta_alt: f64,
    pub indicator: u8,
    pub accept_prob: f64,
    pub uniform_draw: f64,
    pub source: PolicySource,
    pub base_ref: f64,
    pub alt_ref: f64,
    pub base_ref_updated: bool,
    pub alt_ref_updated: bool,
}

/// Normal operation computes the indicator; the diagnostic mode forces it to
/// 1 so the acceptance draws follow the majorant law exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndicatorMode {
    Computed,
    ForcedOn,
}

/// Initialize references from both critics at the initial state.
pub fn init_references(
    base_critic: &dyn Critic,
    alt_critic: &dyn Critic,
    s0: &State,
    nu: f64,
) -> Result<ValueReference, CriticError> {
    let v_base_ref = checked_value(base_critic, "base", s0)?;
    let v_alt_ref = checked_value(alt_critic, "alternative", s0)?;
    Ok(ValueReference {
        v_base_ref,
        v_alt_ref,
        nu,
    })
}

/// Critic improvements over the current references. Pure; no mutation.
pub fn improvements(
    refs: &ValueReference,
    base_critic: &dyn Critic,
    alt_critic: &dyn Critic,
    s: &State,
) -> Result<(f64, f64), CriticError> {
    let vb = checked_value(base_critic, "base", s)?;
    let va = checked_value(alt_critic, "alternative", s)?;
    Ok((vb - refs.v_base_ref, va - refs.v_alt_ref))
}

/// 1 iff the base policy's normalized improvement strictly exceeds the
/// alternative's and both reference magnitudes clear the division guard.
/// Ties and guard trips yield 0: the conservative branch.
pub fn indicator(delta_base: f64, delta_alt: f64, refs: &ValueReference, epsilon_norm: f64) -> u8 {
    if refs.v_base_ref.abs() < epsilon_norm || refs.v_alt_ref.abs() < epsilon_norm {
        return 0;
    }
    if delta_base / refs.v_base_ref > delta_alt / refs.v_alt_ref {
        1
    } else {
        0
    }
}

/// The fused non-stationary policy for a single rollout. Stateless apart
/// from the references and the time index: identical inputs and identical
/// random streams produce identical traces.
pub struct FusedPolicy {
    base: Arc<dyn StationaryPolicy>,
    alt: Arc<dyn StationaryPolicy>,
    base_critic: Arc<dyn Critic>,
    alt_critic: Arc<dyn Critic>,
    schedule: Arc<dyn Schedule>,
    refs: ValueReference,
    epsilon_norm: f64,
    indicator_mode: IndicatorMode,
    time: usize,
}

impl FusedPolicy {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        base: Arc<dyn StationaryPolicy>,
        alt: Arc<dyn StationaryPolicy>,
        base_critic: Arc<dyn Critic>,
        alt_critic: Arc<dyn Critic>,
        schedule: Arc<dyn Schedule>,
        s0: &State,
        nu: f64,
        epsilon_norm: f64,
        indicator_mode: IndicatorMode,
    ) -> Result<Self, CriticError> {
        let refs = init_references(base_critic.as_ref(), alt_critic.as_ref(), s0, nu)?;
        Ok(FusedPolicy {
            base,
            alt,
            base_critic,
            alt_critic,
            schedule,
            refs,
            epsilon_norm,
            indicator_mode,
            time: 0,
        })
    }

    pub fn references(&self) -> &ValueReference {
        &self.refs
    }

    pub fn time(&self) -> usize {
        self.time
    }

    /// One fused decision: compute deltas and the indicator, draw the
    /// acceptance uniform, sample the selected policy, then apply reference
    /// updates and advance the time index. The order matches the switching
    /// loop: action selection strictly precedes reference updates.
    pub fn fused_step(
        &mut self,
        s: &State,
        t: usize,
        streams: &mut RolloutStreams,
    ) -> Result<(Action, FusionStepRecord), FusionError> {
        if t != self.time {
            return Err(FusionError::TimeIndexMismatch {
                expected: self.time,
                got: t,
            });
        }
        let vb = checked_value(self.base_critic.as_ref(), "base", s)
            .map_err(|source| FusionError::Critic { step: t, source })?;
        let va = checked_value(self.alt_critic.as_ref(), "alternative", s)
            .map_err(|source| FusionError::Critic { step: t, source })?;
        let delta_base = vb - self.refs.v_base_ref;
        let delta_alt = va - self.refs.v_alt_ref;

        let ind = match self.indicator_mode {
            IndicatorMode::Computed => {
                indicator(delta_base, delta_alt, &self.refs, self.epsilon_norm)
            }
            IndicatorMode::ForcedOn => 1,
        };

        let accept_prob = self.schedule.accept_prob(t, s);
        debug_assert!((0.0..=1.0).contains(&accept_prob));
        let uniform_draw: f64 = streams.acceptance.random_range(0.0..1.0);

        let source = if uniform_draw < accept_prob * f64::from(ind) {
            PolicySource::Base
        } else {
            PolicySource::Alternative
        };
        let action = match source {
            PolicySource::Base => self.base.sample(s, &mut streams.base_action),
            PolicySource::Alternative => self.alt.sample(s, &mut streams.alt_action),
        };
        if !action.is_finite() {
            return Err(FusionError::NonFiniteAction {
                step: t,
                source_policy: source.label(),
                action: action.to_string(),
            });
        }

        let base_ref_updated = delta_base >= self.refs.nu;
        let alt_ref_updated = delta_alt >= self.refs.nu;
        let record = FusionStepRecord {
            time: t,
            delta_base,
            delta_alt,
            indicator: ind,
            accept_prob,
            uniform_draw,
            source,
            base_ref: self.refs.v_base_ref,
            alt_ref: self.refs.v_alt_ref,
            base_ref_updated,
            alt_ref_updated,
        };
        if base_ref_updated {
            self.refs.v_base_ref = vb;
        }
        if alt_ref_updated {
            self.refs.v_alt_ref = va;
        }
        self.time += 1;
        Ok((action, record))
    }
}

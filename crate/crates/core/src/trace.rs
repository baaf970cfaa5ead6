//! Rollout traces and their serialized forms.
//!
//! Fused decisions serialize one record per step as columnar CSV with the
//! fixed column order `t,delta_base,delta_alt,indicator,accept_prob,u,
//! source,base_ref,alt_ref`, and as an equivalent JSON-lines form with the
//! same fields. `base_ref`/`alt_ref` are the pre-update references, so
//! `delta = critic(s) - ref` can be audited directly from the file.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::fusion::FusionStepRecord;
use crate::state::{Action, State};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("csv serialization failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("json serialization failed: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One step of a rollout: the pre-transition state, the action taken, the
/// immediate reward, the goal distance of the pre-transition state, and the
/// fused decision record when the acting policy was fused.
#[derive(Debug, Clone)]
pub struct TraceStep {
    pub state: State,
    pub action: Action,
    pub reward: f64,
    pub goal_dist: f64,
    pub fusion: Option<FusionStepRecord>,
}

/// Full per-step record of one rollout, plus the terminal state.
#[derive(Debug, Clone)]
pub struct RolloutTrace {
    pub steps: Vec<TraceStep>,
    pub final_state: State,
    pub final_goal_dist: f64,
}

impl RolloutTrace {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    /// Goal distances of every visited state, including the terminal one.
    pub fn goal_dists(&self) -> impl Iterator<Item = f64> + '_ {
        self.steps
            .iter()
            .map(|s| s.goal_dist)
            .chain(std::iter::once(self.final_goal_dist))
    }

    /// Finite-horizon truncation of the discounted return over the recorded
    /// steps.
    pub fn discounted_return(&self, gamma: f64) -> f64 {
        discounted_return_of(self.steps.iter().map(|s| s.reward), gamma)
    }
}

/// `sum_t gamma^t r_t` with the power accumulated by one multiplication per
/// step.
pub fn discounted_return_of(rewards: impl Iterator<Item = f64>, gamma: f64) -> f64 {
    let mut total = 0.0;
    let mut discount = 1.0;
    for r in rewards {
        total += discount * r;
        discount *= gamma;
    }
    total
}

/// Serialized fused-decision row; field order is the file column order.
#[derive(Debug, Clone, Serialize)]
struct TraceRow {
    t: usize,
    delta_base: f64,
    delta_alt: f64,
    indicator: u8,
    accept_prob: f64,
    u: f64,
    source: &'static str,
    base_ref: f64,
    alt_ref: f64,
}

impl From<&FusionStepRecord> for TraceRow {
    fn from(r: &FusionStepRecord) -> Self {
        TraceRow {
            t: r.time,
            delta_base: r.delta_base,
            delta_alt: r.delta_alt,
            indicator: r.indicator,
            accept_prob: r.accept_prob,
            u: r.uniform_draw,
            source: r.source.label(),
            base_ref: r.base_ref,
            alt_ref: r.alt_ref,
        }
    }
}

/// Write the fused records of a trace as columnar CSV.
pub fn write_trace_csv<W: Write>(records: &[FusionStepRecord], out: W) -> Result<(), TraceError> {
    let mut writer = csv::Writer::from_writer(out);
    for record in records {
        writer.serialize(TraceRow::from(record))?;
    }
    writer.flush()?;
    Ok(())
}

/// Write the fused records of a trace as JSON lines with the same fields.
pub fn write_trace_jsonl<W: Write>(
    records: &[FusionStepRecord],
    mut out: W,
) -> Result<(), TraceError> {
    for record in records {
        serde_json::to_writer(&mut out, &TraceRow::from(record))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

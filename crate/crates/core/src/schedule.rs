//! Acceptance-probability schedules and their summable majorants.
//!
//! A schedule is a pure function of the time index and state. Every schedule
//! exposes a majorant sequence dominating it pointwise, and summability is
//! certified symbolically per family: a finite numeric sum can never certify
//! an infinite series, so families without a closed-form tail bound fail the
//! check by construction.

use std::sync::Arc;

use crate::critics::Critic;
use crate::state::State;

pub trait Schedule: Send + Sync {
    /// Acceptance probability at time `t` in state `s`; always bounded by
    /// `majorant(t)`.
    fn accept_prob(&self, t: usize, s: &State) -> f64;

    /// The majorant sequence value at `t`.
    fn majorant(&self, t: usize) -> f64;

    /// Closed-form bound on the majorant tail sum from `from` on, when the
    /// family admits one.
    fn majorant_tail_sum(&self, from: usize) -> Option<f64>;
}

/// Geometrically decaying schedule: majorant `p_relax * lambda^t`, with the
/// acceptance probability equal to its majorant (state-independent).
///
/// Powers come from the single recurrence `m_{t+1} = m_t * lambda`, so
/// consecutive majorants differ by exactly one rounded multiplication and
/// the tail sum has the closed form `p * lambda^t / (1 - lambda)`.
#[derive(Debug, Clone)]
pub struct GeometricSchedule {
    pub lambda: f64,
    pub p_relax: f64,
    table: Arc<Vec<f64>>,
}

const POWER_TABLE_LEN: usize = 8192;

impl GeometricSchedule {
    pub fn new(lambda: f64, p_relax: f64) -> Result<Self, String> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(format!("lambda must lie in (0, 1), got {lambda}"));
        }
        if !(0.0..=1.0).contains(&p_relax) {
            return Err(format!("p_relax must lie in [0, 1], got {p_relax}"));
        }
        let mut table = Vec::with_capacity(POWER_TABLE_LEN);
        let mut m = p_relax;
        for _ in 0..POWER_TABLE_LEN {
            table.push(m);
            m *= lambda;
        }
        Ok(GeometricSchedule {
            lambda,
            p_relax,
            table: Arc::new(table),
        })
    }
}

impl Schedule for GeometricSchedule {
    fn accept_prob(&self, t: usize, _s: &State) -> f64 {
        self.majorant(t)
    }

    fn majorant(&self, t: usize) -> f64 {
        if t < self.table.len() {
            return self.table[t];
        }
        let mut m = self.table[self.table.len() - 1];
        for _ in self.table.len()..=t {
            m *= self.lambda;
        }
        m
    }

    fn majorant_tail_sum(&self, from: usize) -> Option<f64> {
        Some(self.majorant(from) / (1.0 - self.lambda))
    }
}

/// Superlevel gate: zero acceptance whenever the base critic has dropped
/// below its value at the rollout's initial state; otherwise defers to the
/// inner schedule. Gating never raises the majorant.
#[derive(Clone)]
pub struct GatedSchedule {
    pub inner: Arc<dyn Schedule>,
    pub base_critic: Arc<dyn Critic>,
    pub v_at_s0: f64,
}

impl GatedSchedule {
    pub fn new(inner: Arc<dyn Schedule>, base_critic: Arc<dyn Critic>, s0: &State) -> Self {
        let v_at_s0 = base_critic.value(s0);
        GatedSchedule {
            inner,
            base_critic,
            v_at_s0,
        }
    }
}

impl Schedule for GatedSchedule {
    fn accept_prob(&self, t: usize, s: &State) -> f64 {
        if self.base_critic.value(s) < self.v_at_s0 {
            0.0
        } else {
            self.inner.accept_prob(t, s)
        }
    }

    fn majorant(&self, t: usize) -> f64 {
        self.inner.majorant(t)
    }

    fn majorant_tail_sum(&self, from: usize) -> Option<f64> {
        self.inner.majorant_tail_sum(from)
    }
}

/// Constant schedule. Divergent for `p > 0`: deliberately fails the
/// summability check, which is its purpose in the test suite.
#[derive(Debug, Clone)]
pub struct ConstantSchedule {
    pub p: f64,
}

impl Schedule for ConstantSchedule {
    fn accept_prob(&self, _t: usize, _s: &State) -> f64 {
        self.p
    }

    fn majorant(&self, _t: usize) -> f64 {
        self.p
    }

    fn majorant_tail_sum(&self, _from: usize) -> Option<f64> {
        if self.p == 0.0 {
            Some(0.0)
        } else {
            None
        }
    }
}

/// Outcome of a summability certification.
#[derive(Debug, Clone)]
pub struct SummabilityCheck {
    /// Value of the full series, when certified.
    pub sum: f64,
    pub pass: bool,
    /// Horizon beyond which the certified tail is below the tolerance.
    pub horizon: Option<usize>,
    pub explanation: String,
}

/// Certify `sum_t majorant(t) < infinity` via the family's closed-form tail
/// bound. Returns the series value and passes iff some horizon has a
/// certified tail below `tolerance`.
pub fn summability_check(schedule: &dyn Schedule, tolerance: f64) -> SummabilityCheck {
    let Some(sum) = schedule.majorant_tail_sum(0) else {
        return SummabilityCheck {
            sum: f64::INFINITY,
            pass: false,
            horizon: None,
            explanation: "schedule family declares no closed-form tail bound; \
                          a finite numeric sum cannot certify an infinite series"
                .to_string(),
        };
    };
    let mut horizon = 1usize;
    loop {
        match schedule.majorant_tail_sum(horizon) {
            Some(tail) if tail < tolerance => {
                return SummabilityCheck {
                    sum,
                    pass: true,
                    horizon: Some(horizon),
                    explanation: format!(
                        "closed-form tail beyond t = {horizon} is {tail:.3e} < {tolerance:.3e}"
                    ),
                };
            }
            Some(_) => {
                if horizon > 1 << 26 {
                    return SummabilityCheck {
                        sum,
                        pass: false,
                        horizon: None,
                        explanation: "tail bound does not fall below the tolerance \
                                      within the search range"
                            .to_string(),
                    };
                }
                horizon *= 2;
            }
            None => {
                return SummabilityCheck {
                    sum,
                    pass: false,
                    horizon: None,
                    explanation: "tail bound unavailable beyond t = 0".to_string(),
                };
            }
        }
    }
}

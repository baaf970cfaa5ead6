//! Estimation reports: Wilson intervals, binomial tolerances, verdicts.
//!
//! Lower bounds coming from the theory get one-sided tests; equalities get
//! two-sided tests. All binomial comparisons use a 3-sigma tolerance
//! computed at the predicted proportion.

use serde::Serialize;

/// Two-sided 95% standard-normal quantile.
pub const Z_95: f64 = 1.959963984540054;

/// Wilson score interval for a binomial proportion; never leaves [0, 1].
///
/// At the degenerate counts the analytic endpoints are exact (`p_hat = 1`
/// gives an upper bound of exactly 1, `p_hat = 0` a lower bound of exactly
/// 0); they are pinned so verdicts on zero-violation claims do not depend on
/// rounding.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    assert!(trials > 0, "wilson interval requires at least one trial");
    let n = trials as f64;
    let p_hat = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p_hat + z2 / (2.0 * n)) / denom;
    let half_width = z * (p_hat * (1.0 - p_hat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 {
        0.0
    } else {
        (centre - half_width).max(0.0)
    };
    let hi = if successes == trials {
        1.0
    } else {
        (centre + half_width).min(1.0)
    };
    (lo, hi)
}

/// Standard deviation of a binomial proportion estimate at `p` over `n`
/// trials.
pub fn binomial_sigma(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// Shape of the claim under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimKind {
    /// The prediction is an equality for the estimated proportion.
    TwoSided,
    /// The prediction is a lower bound on the estimated proportion.
    LowerBound,
}

/// One estimated proportion with its interval, prediction, and verdict.
#[derive(Debug, Clone, Serialize)]
pub struct EstimationReport {
    pub schema_version: &'static str,
    pub claim: String,
    pub kind: ClaimKind,
    pub n_rollouts: usize,
    pub horizon: usize,
    pub successes: usize,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub predicted: Option<f64>,
    /// Tolerance added beyond the interval: 3 sigma at the predicted value.
    pub slack: f64,
    pub verdict: Verdict,
    pub master_seed: u64,
    pub config_hash: String,
    pub notes: Vec<String>,
}

impl EstimationReport {
    /// Build a report from raw counts. Two-sided claims pass when the
    /// prediction lies within the interval widened by the slack; lower-bound
    /// claims pass when the prediction does not exceed the widened upper
    /// end. Without a prediction the verdict is inconclusive.
    #[allow(clippy::too_many_arguments)]
    pub fn from_counts(
        claim: impl Into<String>,
        kind: ClaimKind,
        successes: usize,
        n_rollouts: usize,
        horizon: usize,
        predicted: Option<f64>,
        master_seed: u64,
        config_hash: impl Into<String>,
    ) -> Self {
        let estimate = successes as f64 / n_rollouts as f64;
        let (ci_low, ci_high) = wilson_interval(successes, n_rollouts, Z_95);
        let slack = predicted.map_or(0.0, |p| 3.0 * binomial_sigma(p, n_rollouts));
        let verdict = match predicted {
            None => Verdict::Inconclusive,
            Some(p) => {
                let pass = match kind {
                    ClaimKind::TwoSided => p >= ci_low - slack && p <= ci_high + slack,
                    ClaimKind::LowerBound => p <= ci_high + slack,
                };
                if pass {
                    Verdict::Pass
                } else {
                    Verdict::Fail
                }
            }
        };
        EstimationReport {
            schema_version: crate::SCHEMA_VERSION,
            claim: claim.into(),
            kind,
            n_rollouts,
            horizon,
            successes,
            estimate,
            ci_low,
            ci_high,
            predicted,
            slack,
            verdict,
            master_seed,
            config_hash: config_hash.into(),
            notes: Vec::new(),
        }
    }

    pub fn inconclusive(mut self, reason: impl Into<String>) -> Self {
        self.verdict = Verdict::Inconclusive;
        self.notes.push(reason.into());
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }
}

/// Mean and standard error of a sample.
pub fn mean_and_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

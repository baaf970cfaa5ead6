//! Critics: scalar value estimates over states.
//!
//! Supplied, never trained. The toy critics keep their range inside (0, 1]
//! so the normalized improvement ratios stay well-posed, and the base
//! critics used with the gating schedule are continuous with bounded
//! superlevel sets.

use serde::Serialize;
use thiserror::Error;

use crate::env::FiniteChainEnv;
use crate::policies::ChainPolicy;
use crate::state::{Norm, State};

#[derive(Debug, Error)]
pub enum CriticError {
    #[error("{role} critic produced a non-finite value at state {state}")]
    NonFinite { role: &'static str, state: String },
    #[error("policy evaluation system is singular or ill-conditioned: {0}")]
    SingularSystem(String),
    #[error("invalid critic parameters: {0}")]
    InvalidParams(String),
}

pub trait Critic: Send + Sync {
    fn value(&self, s: &State) -> f64;

    /// Global Lipschitz bound with respect to the critic's norm, when one is
    /// known; used to document one-sided grid-minimization error.
    fn lipschitz_bound(&self) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone)]
pub struct ConstantCritic(pub f64);

impl Critic for ConstantCritic {
    fn value(&self, _s: &State) -> f64 {
        self.0
    }

    fn lipschitz_bound(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// `V(s) = exp(-||s - center||^2 / scale^2)`.
///
/// Continuous, range (0, 1], and every superlevel set `{V >= a}` with
/// `a` in (0, 1] is the closed ball of radius `scale * sqrt(-ln a)` around
/// the center, hence bounded.
#[derive(Debug, Clone)]
pub struct GaussianBumpCritic {
    pub center: State,
    pub scale: f64,
    pub norm: Norm,
}

impl GaussianBumpCritic {
    pub fn new(center: State, scale: f64, norm: Norm) -> Result<Self, CriticError> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(CriticError::InvalidParams(format!(
                "scale must be positive and finite, got {scale}"
            )));
        }
        Ok(GaussianBumpCritic { center, scale, norm })
    }

    /// Radius of the superlevel set `{V >= a}` for `a` in (0, 1].
    pub fn superlevel_radius(&self, a: f64) -> f64 {
        self.scale * (-a.ln()).sqrt()
    }
}

impl Critic for GaussianBumpCritic {
    fn value(&self, s: &State) -> f64 {
        let d = self.norm.dist(s, &self.center);
        (-d * d / (self.scale * self.scale)).exp()
    }

    fn lipschitz_bound(&self) -> Option<f64> {
        // max_r |d/dr exp(-r^2/scale^2)| = sqrt(2/e) / scale, attained at
        // r = scale / sqrt(2); the radial distance is 1-Lipschitz in s.
        Some((2.0f64 / std::f64::consts::E).sqrt() / self.scale)
    }
}

/// Exact tabular critic over integer-embedded chain states, extended to the
/// embedding interval by linear interpolation (clamped at the ends) so it is
/// continuous on the chain's compact state space.
#[derive(Debug, Clone, Serialize)]
pub struct TabularCritic {
    pub values: Vec<f64>,
    pub gamma: f64,
}

impl TabularCritic {
    pub fn value_at(&self, i: usize) -> f64 {
        self.values[i]
    }

    /// Serialize the value vector for audit.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tabular critic serializes")
    }
}

impl Critic for TabularCritic {
    fn value(&self, s: &State) -> f64 {
        let n = self.values.len();
        let x = s.as_scalar().max(0.0).min((n - 1) as f64);
        let lo = x.floor() as usize;
        if lo + 1 >= n {
            return self.values[n - 1];
        }
        let frac = x - lo as f64;
        self.values[lo] * (1.0 - frac) + self.values[lo + 1] * frac
    }

    fn lipschitz_bound(&self) -> Option<f64> {
        Some(
            self.values
                .windows(2)
                .map(|w| (w[1] - w[0]).abs())
                .fold(0.0, f64::max),
        )
    }
}

/// Exact policy evaluation: solve `(I - gamma * P_pi) v = r_pi` for the
/// discounted value of `policy` on `env`. The residual is checked so the
/// returned values are within 1e-10 of the Bellman fixed point.
pub fn make_tabular_critic(
    env: &FiniteChainEnv,
    policy: &ChainPolicy,
    gamma: f64,
) -> Result<TabularCritic, CriticError> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(CriticError::InvalidParams(format!(
            "gamma must be in [0, 1), got {gamma}"
        )));
    }
    let n = env.n_states();
    let m = env.n_actions();
    // Policy-averaged transition matrix and reward vector.
    let mut p_pi = vec![0.0; n * n];
    let mut r_pi = vec![0.0; n];
    for i in 0..n {
        let probs = policy.action_probs(i);
        for k in 0..m {
            let pk = probs[k];
            if pk == 0.0 {
                continue;
            }
            r_pi[i] += pk * env.reward_at(i, k);
            for (j, &t) in env.one_step_distribution(i, k).iter().enumerate() {
                p_pi[i * n + j] += pk * t;
            }
        }
    }
    // A = I - gamma * P_pi
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = (if i == j { 1.0 } else { 0.0 }) - gamma * p_pi[i * n + j];
        }
    }
    let values = solve_dense(&mut a, &mut r_pi.clone(), n)?;
    // Banach bound: ||v - v*||_inf <= ||residual||_inf / (1 - gamma).
    let mut residual: f64 = 0.0;
    for i in 0..n {
        let mut ax = 0.0;
        for j in 0..n {
            ax += ((if i == j { 1.0 } else { 0.0 }) - gamma * p_pi[i * n + j]) * values[j];
        }
        residual = residual.max((ax - r_pi[i]).abs());
    }
    if residual / (1.0 - gamma) > 1e-10 {
        return Err(CriticError::SingularSystem(format!(
            "fixed-point residual {residual} exceeds tolerance"
        )));
    }
    Ok(TabularCritic { values, gamma })
}

/// Gaussian elimination with partial pivoting on a dense row-major system.
fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) -> Result<Vec<f64>, CriticError> {
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r1, &r2| {
                a[r1 * n + col]
                    .abs()
                    .partial_cmp(&a[r2 * n + col].abs())
                    .unwrap()
            })
            .unwrap();
        if a[pivot_row * n + col].abs() < 1e-14 {
            return Err(CriticError::SingularSystem(format!(
                "pivot {} at column {col}",
                a[pivot_row * n + col]
            )));
        }
        if pivot_row != col {
            for j in 0..n {
                a.swap(col * n + j, pivot_row * n + j);
            }
            b.swap(col, pivot_row);
        }
        let pivot = a[col * n + col];
        for row in (col + 1)..n {
            let factor = a[row * n + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                a[row * n + j] -= factor * a[col * n + j];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for j in (row + 1)..n {
            acc -= a[row * n + j] * x[j];
        }
        x[row] = acc / a[row * n + row];
    }
    Ok(x)
}

/// Finiteness check shared by the fusion layer; names the critic role in the
/// diagnostic.
pub fn checked_value(
    critic: &dyn Critic,
    role: &'static str,
    s: &State,
) -> Result<f64, CriticError> {
    let v = critic.value(s);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CriticError::NonFinite {
            role,
            state: s.to_string(),
        })
    }
}

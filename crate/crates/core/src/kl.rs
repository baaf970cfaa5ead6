//! Goal-reaching certificates in factored class-KL form.
//!
//! A certificate is a pair of class-K-infinity functions `kappa`, `xi` and a
//! failure probability `eps`: the certified policy keeps
//! `goal_dist(S_t) <= beta(goal_dist(s_0), t)` for all `t` with probability
//! at least `1 - eps`, where `beta(d, t) = kappa(d) * xi(e^{-t})`.
//! Certificates are supplied constructively with each alternative policy so
//! the reaching-time quantities can be computed from them.

use std::sync::Arc;

use thiserror::Error;

use crate::env::{ContractiveScalarEnv, FiniteChainEnv, Mdp};
use crate::policies::{ChainPolicy, ProportionalPolicy, StationaryPolicy};
use crate::state::State;

#[derive(Debug, Error)]
pub enum CertificateError {
    #[error(
        "certificate admissibility violated: goal_radius ({g}) must exceed \
         w_max / (1 - c) = {bound} for contraction rate c = {c}"
    )]
    InadmissibleScalar { g: f64, bound: f64, c: f64 },
    #[error("contraction rate must lie in (0, 1), got {0}")]
    InvalidRate(f64),
    #[error("{0}")]
    InvalidChainPolicy(String),
    #[error("value {y} outside the invertible range of the class-K function")]
    OutsideRange { y: f64 },
}

/// Closed-form class-K-infinity function handles: continuous, strictly
/// increasing, zero at zero, unbounded.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassKInfty {
    /// `x`
    Identity,
    /// `x^p` with `p > 0`
    Power { exponent: f64 },
    /// `x * e^x`
    LinearExp,
}

impl ClassKInfty {
    pub fn eval(&self, x: f64) -> f64 {
        debug_assert!(x >= 0.0, "class-K functions are evaluated on [0, inf)");
        match self {
            ClassKInfty::Identity => x,
            ClassKInfty::Power { exponent } => x.powf(*exponent),
            ClassKInfty::LinearExp => x * x.exp(),
        }
    }

    /// Registered closed-form inverse, when one exists.
    pub fn closed_form_inverse(&self, y: f64) -> Option<f64> {
        match self {
            ClassKInfty::Identity => Some(y),
            ClassKInfty::Power { exponent } => Some(y.powf(1.0 / exponent)),
            ClassKInfty::LinearExp => None,
        }
    }

    /// Inverse on [0, inf): closed form if registered, otherwise bisection
    /// with bracket expansion to absolute tolerance 1e-12. Monotonicity
    /// makes the bisection globally convergent.
    pub fn inverse(&self, y: f64) -> Result<f64, CertificateError> {
        if !(y >= 0.0) {
            return Err(CertificateError::OutsideRange { y });
        }
        if y == 0.0 {
            return Ok(0.0);
        }
        if let Some(x) = self.closed_form_inverse(y) {
            return Ok(x);
        }
        let mut hi = 1.0f64;
        let mut expansions = 0;
        while self.eval(hi) < y {
            hi *= 2.0;
            expansions += 1;
            if expansions > 1100 {
                return Err(CertificateError::OutsideRange { y });
            }
        }
        let mut lo = 0.0f64;
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if self.eval(mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// `beta(d, t) = kappa(d) * xi(e^{-t})` with failure probability `eps`.
#[derive(Debug, Clone)]
pub struct KlCertificate {
    pub kappa: ClassKInfty,
    pub xi: ClassKInfty,
    pub eps: f64,
}

impl KlCertificate {
    pub fn beta(&self, d: f64, t: usize) -> f64 {
        self.kappa.eval(d) * self.xi.eval((-(t as f64)).exp())
    }
}

/// A stationary policy together with its goal-reaching certificate.
#[derive(Clone)]
pub struct CertifiedPolicy {
    pub policy: Arc<dyn StationaryPolicy>,
    pub certificate: KlCertificate,
}

/// Proportional policy `a = c*s` on the scalar environment.
///
/// Admissible iff `g > w_max / (1 - c)`; then `|S'| <= c|s| + w_max` and
/// `c*g + w_max < g` give the sure per-step contraction
/// `goal_dist(S') <= c * goal_dist(S)`, hence
/// `goal_dist(S_t) <= d_0 * c^t = beta(d_0, t)` with
/// `kappa(d) = d`, `xi(r) = r^{ln(1/c)}`, `eps = 0`.
pub fn make_scalar_certified_policy(
    c: f64,
    env: &ContractiveScalarEnv,
) -> Result<CertifiedPolicy, CertificateError> {
    if !(c > 0.0 && c < 1.0) {
        return Err(CertificateError::InvalidRate(c));
    }
    let bound = env.w_max / (1.0 - c);
    if !(env.goal_radius > bound) {
        return Err(CertificateError::InadmissibleScalar {
            g: env.goal_radius,
            bound,
            c,
        });
    }
    Ok(CertifiedPolicy {
        policy: Arc::new(ProportionalPolicy {
            gain: c,
            a_max: env.a_max,
        }),
        certificate: KlCertificate {
            kappa: ClassKInfty::Identity,
            xi: ClassKInfty::Power {
                exponent: -c.ln(),
            },
            eps: 0.0,
        },
    })
}

/// Toward-goal policy on a finite chain whose goal-ward actions are
/// deterministic single steps.
///
/// The walk satisfies `goal_dist(S_t) = max(d_0 - t, 0)`, which is dominated
/// by `d_0 * e^{d_0} * e^{-t}`, so `kappa(d) = d * e^d`, `xi(r) = r`,
/// `eps = 0` is a valid (conservative) certificate. The constructor verifies
/// the required determinism from the transition tensor and rejects
/// otherwise: a noisy goal-ward action would make the certificate false.
pub fn make_chain_certified_policy(
    env: &FiniteChainEnv,
) -> Result<CertifiedPolicy, CertificateError> {
    let policy = ChainPolicy::toward_goal(env);
    let goal = env.goal();
    for i in 0..env.n_states() {
        let s = State::index(i);
        let d = goal.goal_dist(&s);
        let probs = policy.action_probs(i);
        let action = probs
            .iter()
            .position(|&p| p == 1.0)
            .ok_or_else(|| {
                CertificateError::InvalidChainPolicy(format!(
                    "toward-goal policy is not deterministic at state {i}"
                ))
            })?;
        for (j, &p) in env.one_step_distribution(i, action).iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let d_next = goal.goal_dist(&State::index(j));
            let required = (d - 1.0).max(0.0);
            if p < 1.0 || d_next > required {
                return Err(CertificateError::InvalidChainPolicy(format!(
                    "action {action} at state {i} does not step toward the goal surely \
                     (p={p}, next={j}, goal_dist {d_next} > {required})"
                )));
            }
        }
    }
    Ok(CertifiedPolicy {
        policy: Arc::new(policy),
        certificate: KlCertificate {
            kappa: ClassKInfty::LinearExp,
            xi: ClassKInfty::Identity,
            eps: 0.0,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_vanishes_at_zero_distance() {
        let cert = KlCertificate {
            kappa: ClassKInfty::Identity,
            xi: ClassKInfty::Identity,
            eps: 0.0,
        };
        for t in [0, 1, 10, 100] {
            assert_eq!(cert.beta(0.0, t), 0.0);
        }
    }

    #[test]
    fn beta_identity_pair_examples() {
        let cert = KlCertificate {
            kappa: ClassKInfty::Identity,
            xi: ClassKInfty::Identity,
            eps: 0.0,
        };
        // xi(1) = 1 at t = 0.
        assert_eq!(cert.beta(10.0, 0), 10.0);
        // beta = d * e^{-t}: frozen value 10 * e^{-3}.
        assert!((cert.beta(10.0, 3) - 0.497870683678639_4).abs() < 1e-15);
    }

    #[test]
    fn scalar_certificate_admissibility() {
        // c = e^{-1}, w_max = 0.1, g = 0.2: 0.1/(1 - e^{-1}) ~ 0.158 < 0.2.
        let env = ContractiveScalarEnv::new(0.1, 0.2, 1.0).unwrap();
        let c = (-1.0f64).exp();
        let certified = make_scalar_certified_policy(c, &env).unwrap();
        assert_eq!(certified.certificate.eps, 0.0);
        // Resulting beta(10, t) = 10 e^{-t}.
        for t in 0..5 {
            let expected = 10.0 * (-(t as f64)).exp();
            assert!((certified.certificate.beta(10.0, t) - expected).abs() < 1e-12);
        }

        // c = 0.9, w_max = 0.1, g = 0.5: 0.1/0.1 = 1.0 > 0.5 -> rejected.
        let env = ContractiveScalarEnv::new(0.1, 0.5, 1.0).unwrap();
        assert!(matches!(
            make_scalar_certified_policy(0.9, &env),
            Err(CertificateError::InadmissibleScalar { .. })
        ));
    }

    #[test]
    fn class_k_inverse_closed_form_and_bisection_agree() {
        let f = ClassKInfty::Power { exponent: 2.0 };
        let y = 0.1;
        let closed = f.inverse(y).unwrap();
        assert!((closed - y.sqrt()).abs() < 1e-15);

        // LinearExp has no closed form; check the bisection satisfies
        // f(f^{-1}(y)) = y.
        let g = ClassKInfty::LinearExp;
        for y in [0.01, 0.5, 1.0, 7.3, 250.0] {
            let x = g.inverse(y).unwrap();
            assert!((g.eval(x) - y).abs() < 1e-9, "y={y} x={x}");
        }
    }

    #[test]
    fn class_k_zero_maps_to_zero() {
        for f in [
            ClassKInfty::Identity,
            ClassKInfty::Power { exponent: 0.5 },
            ClassKInfty::LinearExp,
        ] {
            assert_eq!(f.eval(0.0), 0.0);
            assert_eq!(f.inverse(0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn chain_certificate_dominates_deterministic_walk() {
        let env = FiniteChainEnv::default_eight_state();
        let certified = make_chain_certified_policy(&env).unwrap();
        for d0 in 0..8 {
            for t in 0..30 {
                let actual = (d0 as f64 - t as f64).max(0.0);
                let bound = certified.certificate.beta(d0 as f64, t);
                assert!(
                    actual <= bound + 1e-12,
                    "d0={d0} t={t}: {actual} > {bound}"
                );
            }
        }
    }
}

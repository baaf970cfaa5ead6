//! Closed-form quantities behind the fused policy's guarantees: the critic
//! minimum over the start region, the transition-envelope supremum over the
//! critic superlevel set, the overshoot bound, the settle-time step count,
//! the tail products of the acceptance majorant, and the exponential lower
//! bound on the reaching-time distribution.
//!
//! Extremization over continuous sets uses deterministic inclusive grids
//! with a documented one-sided error from the extremand's modulus of
//! continuity. Infinite products are evaluated in log space with
//! compensated summation and a closed-form bound on the truncation error.

use serde::Serialize;
use thiserror::Error;

use crate::critics::Critic;
use crate::env::{ActionSpace, GoalSet, Mdp, StateSpace};
use crate::kl::{CertificateError, KlCertificate};
use crate::schedule::Schedule;
use crate::state::{Action, State};

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("the region {{goal_dist <= {d_circ}}} has no bounded enclosing box; its minimum may not exist")]
    UnboundedRegion { d_circ: f64 },
    #[error(
        "superlevel set {{V >= {v_min}}} still grows after {expansions} box doublings; \
         the base critic must have bounded superlevel sets"
    )]
    UnboundedSuperlevel { v_min: f64, expansions: usize },
    #[error("no grid point satisfies the region constraint; increase the resolution")]
    EmptyRegion,
    #[error("resolution must be at least 2 points per axis, got {0}")]
    BadResolution(usize),
    #[error("d_star must be positive, got {0}")]
    BadDStar(f64),
    #[error("schedule majorant is not summable; tail products are undefined")]
    NotSummable,
    #[error("tail product did not converge within {0} factors")]
    NoConvergence(usize),
    #[error("corollary bound undefined: lambda^t * p_relax = {x} must be below 1")]
    CorollaryUndefined { x: f64 },
    #[error("corollary bound requires t >= 1, got {0}")]
    CorollaryBadT(usize),
    #[error("corollary bound requires lambda in (0,1) and p_relax in [0,1], got ({lambda}, {p_relax})")]
    CorollaryBadParams { lambda: f64, p_relax: f64 },
    #[error(transparent)]
    Certificate(#[from] CertificateError),
}

// ---------------------------------------------------------------------------
// Grids
// ---------------------------------------------------------------------------

/// Inclusive linspace: `n >= 2` points with both endpoints exact.
fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    debug_assert!(n >= 2);
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(move |i| {
        if i == n - 1 {
            hi
        } else {
            lo + step * i as f64
        }
    })
}

/// Cartesian grid over an axis-aligned box, visiting points in index order.
fn for_each_grid_point(bounds: &[(f64, f64)], n: usize, mut f: impl FnMut(&State)) {
    match bounds.len() {
        1 => {
            for x in linspace(bounds[0].0, bounds[0].1, n) {
                f(&State::scalar(x));
            }
        }
        2 => {
            for x in linspace(bounds[0].0, bounds[0].1, n) {
                for y in linspace(bounds[1].0, bounds[1].1, n) {
                    f(&State::pair(x, y));
                }
            }
        }
        dim => {
            // Shipped environments are at most two-dimensional.
            unimplemented!("grid extremization over dimension {dim}")
        }
    }
}

/// Half cell diagonal of an inclusive grid: the covering radius of the grid
/// inside its box, in the sup norm.
fn covering_radius(bounds: &[(f64, f64)], n: usize) -> f64 {
    bounds
        .iter()
        .map(|(lo, hi)| (hi - lo) / (n - 1) as f64 / 2.0)
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// v_min over the start region
// ---------------------------------------------------------------------------

/// Grid minimum with its documented one-sided error: the true minimum lies
/// in `[value - one_sided_error, value]` when the critic's Lipschitz bound
/// is known.
#[derive(Debug, Clone, Serialize)]
pub struct VMinEstimate {
    pub value: f64,
    pub one_sided_error: Option<f64>,
    pub points_evaluated: usize,
}

/// Minimum of the base critic over `{ s : goal_dist(s) <= d_circ }`.
pub fn compute_v_min(
    critic: &dyn Critic,
    space: &StateSpace,
    goal: &GoalSet,
    d_circ: f64,
    resolution: usize,
) -> Result<VMinEstimate, BoundsError> {
    match space {
        StateSpace::Finite { states } => {
            let mut min = f64::INFINITY;
            let mut count = 0;
            for s in states {
                if goal.goal_dist(s) <= d_circ {
                    min = min.min(critic.value(s));
                    count += 1;
                }
            }
            if count == 0 {
                return Err(BoundsError::EmptyRegion);
            }
            Ok(VMinEstimate {
                value: min,
                one_sided_error: Some(0.0),
                points_evaluated: count,
            })
        }
        StateSpace::Continuous { dim } => {
            if resolution < 2 {
                return Err(BoundsError::BadResolution(resolution));
            }
            let bounds = goal
                .sublevel_box(d_circ, *dim)
                .ok_or(BoundsError::UnboundedRegion { d_circ })?;
            let mut min = f64::INFINITY;
            let mut count = 0usize;
            for_each_grid_point(&bounds, resolution, |s| {
                if goal.goal_dist(s) <= d_circ {
                    min = min.min(critic.value(s));
                    count += 1;
                }
            });
            if count == 0 {
                return Err(BoundsError::EmptyRegion);
            }
            let radius = covering_radius(&bounds, resolution);
            Ok(VMinEstimate {
                value: min,
                one_sided_error: critic.lipschitz_bound().map(|l| l * radius),
                points_evaluated: count,
            })
        }
    }
}

// ---------------------------------------------------------------------------
// d_pbar over the critic superlevel set
// ---------------------------------------------------------------------------

/// Grid supremum of the envelope with its documented one-sided error: the
/// true supremum lies in `[value, value + one_sided_error]`.
#[derive(Debug, Clone, Serialize)]
pub struct DPbarEstimate {
    pub value: f64,
    pub one_sided_error: f64,
    pub expansions: usize,
    pub points_evaluated: usize,
}

const MAX_BOX_EXPANSIONS: usize = 60;

/// Supremum of the transition envelope over
/// `{ s : base_critic(s) >= v_min } x actions`.
///
/// Continuous spaces are searched with doubling boxes; the expansion
/// terminates when a fresh outer shell contains no superlevel point, which
/// the bounded-superlevel-set assumption guarantees. Failure to terminate
/// within the expansion budget rejects, citing that assumption.
pub fn compute_d_pbar(
    env: &dyn Mdp,
    base_critic: &dyn Critic,
    v_min: f64,
    resolution: usize,
) -> Result<DPbarEstimate, BoundsError> {
    match env.state_space() {
        StateSpace::Finite { states } => {
            let members: Vec<&State> = states
                .iter()
                .filter(|s| base_critic.value(s) >= v_min)
                .collect();
            if members.is_empty() {
                return Err(BoundsError::EmptyRegion);
            }
            let mut sup = f64::NEG_INFINITY;
            let mut count = 0;
            for s in &members {
                for_each_action(env, resolution, |a| {
                    sup = sup.max(env.envelope(s, a));
                    count += 1;
                });
            }
            Ok(DPbarEstimate {
                value: sup,
                one_sided_error: 0.0,
                expansions: 0,
                points_evaluated: count,
            })
        }
        StateSpace::Continuous { dim } => {
            if resolution < 2 {
                return Err(BoundsError::BadResolution(resolution));
            }
            // Expand until a shell free of superlevel points is seen.
            let mut radius = 1.0f64;
            let mut expansions = 0usize;
            loop {
                let inner = radius / 2.0;
                let bounds = vec![(-radius, radius); dim];
                let mut shell_hit = false;
                for_each_grid_point(&bounds, resolution, |s| {
                    if !shell_hit
                        && s.coords().iter().any(|c| c.abs() > inner)
                        && base_critic.value(s) >= v_min
                    {
                        shell_hit = true;
                    }
                });
                if expansions > 0 && !shell_hit {
                    break;
                }
                expansions += 1;
                if expansions > MAX_BOX_EXPANSIONS {
                    return Err(BoundsError::UnboundedSuperlevel { v_min, expansions });
                }
                radius *= 2.0;
            }
            let bounds = vec![(-radius, radius); dim];
            let mut sup = f64::NEG_INFINITY;
            let mut member_states = 0usize;
            let mut count = 0usize;
            let mut members: Vec<State> = Vec::new();
            for_each_grid_point(&bounds, resolution, |s| {
                if base_critic.value(s) >= v_min {
                    member_states += 1;
                    members.push(s.clone());
                }
            });
            if member_states == 0 {
                return Err(BoundsError::EmptyRegion);
            }
            for s in &members {
                for_each_action(env, resolution, |a| {
                    sup = sup.max(env.envelope(s, a));
                    count += 1;
                });
            }
            let state_radius = covering_radius(&bounds, resolution);
            let action_radius = match env.action_space() {
                ActionSpace::Box { lo, hi } => {
                    let b: Vec<(f64, f64)> = lo.into_iter().zip(hi).collect();
                    covering_radius(&b, resolution)
                }
                ActionSpace::Finite { .. } => 0.0,
            };
            Ok(DPbarEstimate {
                value: sup,
                one_sided_error: env.envelope_lipschitz() * (state_radius + action_radius),
                expansions,
                points_evaluated: count,
            })
        }
    }
}

fn for_each_action(env: &dyn Mdp, resolution: usize, mut f: impl FnMut(&Action)) {
    match env.action_space() {
        ActionSpace::Finite { count } => {
            for k in 0..count {
                f(&Action::Discrete(k));
            }
        }
        ActionSpace::Box { lo, hi } => {
            debug_assert_eq!(lo.len(), 1, "shipped action sets are one-dimensional");
            for a in linspace(lo[0], hi[0], resolution) {
                f(&Action::scalar(a));
            }
        }
    }
}

// ---------------------------------------------------------------------------
// tau_f, tail products, corollary bound, overshoot
// ---------------------------------------------------------------------------

/// Minimum number of steps for the certified policy to bring any state with
/// goal distance at most `d_max` to within `d_star`:
/// `max(1, ceil(-ln(xi^{-1}(d_star / kappa(d_max)))))`.
///
/// The natural logarithm is forced by the `xi(e^{-t})` factorization.
pub fn compute_tau_f(
    certificate: &KlCertificate,
    d_max: f64,
    d_star: f64,
) -> Result<usize, BoundsError> {
    if !(d_star > 0.0) {
        return Err(BoundsError::BadDStar(d_star));
    }
    let kappa_dmax = certificate.kappa.eval(d_max);
    let y = d_star / kappa_dmax;
    let xi_inv = certificate.xi.inverse(y)?;
    if xi_inv >= 1.0 {
        return Ok(1);
    }
    let raw = -xi_inv.ln();
    Ok((raw.ceil() as usize).max(1))
}

/// `prod_{k=t}^inf (1 - majorant(k))`, evaluated in log space with Kahan
/// summation. Returns 0 when any factor vanishes. The truncation point is
/// chosen from the closed-form majorant tail bound so the neglected factors
/// change the log-product by less than 1e-15 (relative product error below
/// 1e-14).
pub fn tail_product(schedule: &dyn Schedule, t: usize) -> Result<f64, BoundsError> {
    const MAX_FACTORS: usize = 10_000_000;
    schedule
        .majorant_tail_sum(t)
        .ok_or(BoundsError::NotSummable)?;
    let mut log_sum = 0.0f64;
    let mut compensation = 0.0f64;
    let mut k = t;
    loop {
        let rho = schedule.majorant(k);
        if rho >= 1.0 {
            return Ok(0.0);
        }
        // Kahan-compensated accumulation of ln(1 - rho).
        let term = (-rho).ln_1p() - compensation;
        let next = log_sum + term;
        compensation = (next - log_sum) - term;
        log_sum = next;

        let tail = schedule
            .majorant_tail_sum(k + 1)
            .ok_or(BoundsError::NotSummable)?;
        // For every j > k, rho_j <= tail; with tail <= 1/4 each neglected
        // |ln(1 - rho_j)| <= rho_j / (1 - rho_j) <= (4/3) rho_j, so the
        // neglected log mass is at most (4/3) * tail.
        if tail <= 0.25 && (4.0 / 3.0) * tail < 1e-15 {
            break;
        }
        k += 1;
        if k - t > MAX_FACTORS {
            return Err(BoundsError::NoConvergence(MAX_FACTORS));
        }
    }
    Ok(log_sum.exp())
}

/// Closed-form exponential lower bound on the geometric-schedule tail
/// product: `exp(-lambda^t p / ((1 - lambda)(1 - lambda^t p)))` for `t >= 1`.
pub fn corollary_lower_bound(lambda: f64, p_relax: f64, t: usize) -> Result<f64, BoundsError> {
    if t < 1 {
        return Err(BoundsError::CorollaryBadT(t));
    }
    if !(lambda > 0.0 && lambda < 1.0) || !(0.0..=1.0).contains(&p_relax) {
        return Err(BoundsError::CorollaryBadParams { lambda, p_relax });
    }
    let x = lambda.powi(t as i32) * p_relax;
    if x >= 1.0 {
        return Err(BoundsError::CorollaryUndefined { x });
    }
    Ok((-x / ((1.0 - lambda) * (1.0 - x))).exp())
}

/// Spatial and temporal bounds for one start region: everything needed to
/// state the overshoot and reaching-time guarantees.
#[derive(Debug, Clone, Serialize)]
pub struct TheoremQuantities {
    pub d_circ: f64,
    pub v_min: f64,
    pub d_pbar: f64,
    pub d_max: f64,
    pub delta: f64,
    pub d_star: f64,
    pub tau_f: usize,
}

/// Uniform overshoot bound `delta = beta(d_max, 0) = kappa(d_max) * xi(1)`.
pub fn overshoot_bound(certificate: &KlCertificate, quantities: &TheoremQuantities) -> f64 {
    certificate.beta(quantities.d_max, 0)
}

/// End-to-end pipeline: `v_min` over the start region, envelope supremum
/// over the critic superlevel set, `d_max`, the overshoot bound, and the
/// settle-time step count.
pub fn compute_theorem_quantities(
    env: &dyn Mdp,
    base_critic: &dyn Critic,
    certificate: &KlCertificate,
    d_circ: f64,
    d_star: f64,
    resolution: usize,
) -> Result<TheoremQuantities, BoundsError> {
    let v_min = compute_v_min(
        base_critic,
        &env.state_space(),
        env.goal(),
        d_circ,
        resolution,
    )?;
    let d_pbar = compute_d_pbar(env, base_critic, v_min.value, resolution)?;
    let d_max = d_circ.max(d_pbar.value);
    let tau_f = compute_tau_f(certificate, d_max, d_star)?;
    let mut q = TheoremQuantities {
        d_circ,
        v_min: v_min.value,
        d_pbar: d_pbar.value,
        d_max,
        delta: 0.0,
        d_star,
        tau_f,
    };
    q.delta = overshoot_bound(certificate, &q);
    debug_assert!(q.d_max >= q.d_circ);
    debug_assert!(q.delta >= 0.0);
    debug_assert!(q.tau_f >= 1);
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critics::{ConstantCritic, GaussianBumpCritic};
    use crate::env::ContractiveScalarEnv;
    use crate::kl::ClassKInfty;
    use crate::schedule::{ConstantSchedule, GeometricSchedule};
    use crate::state::Norm;

    fn identity_cert() -> KlCertificate {
        KlCertificate {
            kappa: ClassKInfty::Identity,
            xi: ClassKInfty::Identity,
            eps: 0.0,
        }
    }

    #[test]
    fn v_min_of_constant_critic_is_the_constant() {
        let goal = GoalSet::NormBall {
            radius: 1.0,
            norm: Norm::Sup,
        };
        let est = compute_v_min(
            &ConstantCritic(1.0),
            &StateSpace::Continuous { dim: 1 },
            &goal,
            5.0,
            101,
        )
        .unwrap();
        assert_eq!(est.value, 1.0);
        assert_eq!(est.one_sided_error, Some(0.0));
    }

    #[test]
    fn v_min_of_radial_bump_attained_at_region_edge() {
        // Goal |s| <= 1, d_circ = 2: the minimum sits at |s| = 3.
        let scale = 2.0;
        let goal = GoalSet::NormBall {
            radius: 1.0,
            norm: Norm::Sup,
        };
        let critic = GaussianBumpCritic::new(State::scalar(0.0), scale, Norm::Sup).unwrap();
        let est = compute_v_min(
            &critic,
            &StateSpace::Continuous { dim: 1 },
            &goal,
            2.0,
            301,
        )
        .unwrap();
        let expected = (-9.0f64 / (scale * scale)).exp();
        assert!((est.value - expected).abs() < 1e-15, "{}", est.value);
    }

    #[test]
    fn d_pbar_on_scalar_env_is_amax_plus_noise() {
        // Superlevel set within [-2, 2]; envelope |a| + w_max peaks at 1.1.
        let env = ContractiveScalarEnv::new(0.1, 0.2, 1.0).unwrap();
        let critic = GaussianBumpCritic::new(State::scalar(0.0), 1.0, Norm::Sup).unwrap();
        let v_min = critic.value(&State::scalar(2.0));
        let est = compute_d_pbar(&env, &critic, v_min, 401).unwrap();
        assert!((est.value - 1.1).abs() < 1e-12, "{}", est.value);
    }

    #[test]
    fn d_pbar_rejects_unbounded_superlevel_sets() {
        let env = ContractiveScalarEnv::new(0.1, 0.2, 1.0).unwrap();
        let constant = ConstantCritic(1.0);
        assert!(matches!(
            compute_d_pbar(&env, &constant, 0.5, 101),
            Err(BoundsError::UnboundedSuperlevel { .. })
        ));
    }

    #[test]
    fn tau_f_hand_evaluations() {
        // kappa = id, xi = id, d_max = 10, d_star = 1: ceil(-ln 0.1) = 3.
        assert_eq!(compute_tau_f(&identity_cert(), 10.0, 1.0).unwrap(), 3);

        // d_star >= kappa(d_max) with xi = id clamps at 1.
        assert_eq!(compute_tau_f(&identity_cert(), 10.0, 10.0).unwrap(), 1);
        assert_eq!(compute_tau_f(&identity_cert(), 10.0, 25.0).unwrap(), 1);

        // kappa = id, xi = r^2: xi^{-1}(0.1) = sqrt(0.1),
        // tau_f = ceil(1.1512...) = 2; closed form agrees with bisection.
        let cert = KlCertificate {
            kappa: ClassKInfty::Identity,
            xi: ClassKInfty::Power { exponent: 2.0 },
            eps: 0.0,
        };
        assert_eq!(compute_tau_f(&cert, 10.0, 1.0).unwrap(), 2);
    }

    #[test]
    fn tau_f_rejects_nonpositive_target() {
        assert!(compute_tau_f(&identity_cert(), 10.0, 0.0).is_err());
    }

    #[test]
    fn tail_product_frozen_values() {
        // First factor 1 - 1 = 0: certain early acceptance.
        let s = GeometricSchedule::new(0.5, 1.0).unwrap();
        assert_eq!(tail_product(&s, 0).unwrap(), 0.0);

        // geometric(0.5, 0.5), t = 1: frozen oracle value.
        let s = GeometricSchedule::new(0.5, 0.5).unwrap();
        let tp = tail_product(&s, 1).unwrap();
        assert!((tp - 0.577576190173204_8).abs() < 1e-12, "{tp}");
        let tp0 = tail_product(&s, 0).unwrap();
        assert!((tp0 - 0.288788095086602_4).abs() < 1e-12, "{tp0}");
    }

    #[test]
    fn tail_product_oracle_direct_multiplication() {
        // Independent route: direct product of enough factors.
        for (lambda, p, t) in [(0.5, 0.5, 1), (0.9, 0.8, 3), (0.3, 1.0, 1), (0.99, 0.8, 200)] {
            let s = GeometricSchedule::new(lambda, p).unwrap();
            let mut direct = 1.0f64;
            for k in t..t + 20_000 {
                direct *= 1.0 - s.majorant(k);
            }
            let tp = tail_product(&s, t).unwrap();
            assert!(
                (tp - direct).abs() <= 1e-12 * direct.max(1e-300),
                "lambda={lambda} p={p} t={t}: {tp} vs {direct}"
            );
        }
    }

    #[test]
    fn tail_product_increases_to_one() {
        let s = GeometricSchedule::new(0.5, 0.5).unwrap();
        let mut prev = 0.0;
        let mut t = 0;
        loop {
            let tp = tail_product(&s, t).unwrap();
            assert!(tp >= prev);
            if 1.0 - tp < 1e-10 {
                break;
            }
            prev = tp;
            t += 1;
            assert!(t < 100, "tail product did not approach 1");
        }
    }

    #[test]
    fn tail_product_rejects_divergent_majorant() {
        let s = ConstantSchedule { p: 0.1 };
        assert!(matches!(tail_product(&s, 0), Err(BoundsError::NotSummable)));
    }

    #[test]
    fn corollary_frozen_values() {
        // lambda = 0.5, p = 1, t = 1: exp(-2).
        let b = corollary_lower_bound(0.5, 1.0, 1).unwrap();
        assert!((b - 0.135335283236612_7).abs() < 1e-15);

        // lambda = 0.5, p = 0.5, t = 1: exp(-2/3), below the tail product.
        let b = corollary_lower_bound(0.5, 0.5, 1).unwrap();
        assert!((b - 0.513417119032592_0).abs() < 1e-15);
        let s = GeometricSchedule::new(0.5, 0.5).unwrap();
        assert!(b <= tail_product(&s, 1).unwrap());

        // p = 0: both sides are exactly 1.
        let b = corollary_lower_bound(0.5, 0.0, 1).unwrap();
        assert_eq!(b, 1.0);
        let s = GeometricSchedule::new(0.5, 0.0).unwrap();
        assert_eq!(tail_product(&s, 1).unwrap(), 1.0);
    }

    #[test]
    fn corollary_rejects_undefined_inputs() {
        assert!(corollary_lower_bound(0.5, 1.0, 0).is_err());
        // lambda^t * p = 1 at t = 1 requires rejection.
        assert!(matches!(
            corollary_lower_bound(0.9999999, 1.0, 1),
            Ok(_) | Err(BoundsError::CorollaryUndefined { .. })
        ));
        assert!(corollary_lower_bound(1.0, 0.5, 1).is_err());
    }

    #[test]
    fn overshoot_bound_examples() {
        let cert = identity_cert();
        let mut q = TheoremQuantities {
            d_circ: 10.0,
            v_min: 0.0,
            d_pbar: 1.1,
            d_max: 10.0,
            delta: 0.0,
            d_star: 1.0,
            tau_f: 3,
        };
        // kappa = id, xi = id, d_max = 10 -> 10.
        assert_eq!(overshoot_bound(&cert, &q), 10.0);
        // d_max = d_circ reduces to beta(d_circ, 0).
        q.d_max = q.d_circ;
        assert_eq!(overshoot_bound(&cert, &q), cert.beta(q.d_circ, 0));
    }

    #[test]
    fn full_scalar_pipeline_matches_hand_computation() {
        // c = e^{-1}, a_max = 1, w_max = 0.1, d_circ = 10:
        // delta = beta(max(10, 1.1), 0) = 10.
        let env = ContractiveScalarEnv::new(0.1, 0.2, 1.0).unwrap();
        let critic = GaussianBumpCritic::new(State::scalar(0.0), 2.0, Norm::Sup).unwrap();
        let cert = crate::kl::make_scalar_certified_policy((-1.0f64).exp(), &env)
            .unwrap()
            .certificate;
        let q = compute_theorem_quantities(&env, &critic, &cert, 10.0, 1.0, 2001).unwrap();
        assert!((q.d_pbar - 1.1).abs() < 1e-12);
        assert_eq!(q.d_max, 10.0);
        assert!((q.delta - 10.0).abs() < 1e-12);
        assert_eq!(q.tau_f, 3);
        assert!(q.delta >= cert.beta(q.d_circ, 0) - 1e-12);
    }
}

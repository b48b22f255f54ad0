//! Critical step sizes, convergence regions and minimizer selection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quotient::{self, QuotientParams, QuotientState};
use crate::scalar::{self, imbalance, Outcome, OutcomeKind, ScalarProblem, ScalarState, StepConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MinimizerKind {
    /// `u = sgn(y)v`, `‖u‖² = |y| − λ` (for `0 < λ < |y|`).
    Sphere,
    /// Only the origin (for `λ ≥ |y|`).
    OriginOnly,
    /// `uᵀv = y` (for `λ = 0`).
    Hyperboloid,
}

/// The set of global minimizers of a scalar problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizerSet {
    pub kind: MinimizerKind,
    pub radius_sq: f64,
    pub y: f64,
}

impl MinimizerSet {
    pub fn of(p: &ScalarProblem) -> Self {
        let ay = p.y.abs();
        if p.lambda == 0.0 && ay > 0.0 {
            Self { kind: MinimizerKind::Hyperboloid, radius_sq: 0.0, y: p.y }
        } else if p.lambda < ay {
            Self { kind: MinimizerKind::Sphere, radius_sq: ay - p.lambda, y: p.y }
        } else {
            Self { kind: MinimizerKind::OriginOnly, radius_sq: 0.0, y: p.y }
        }
    }
}

/// `S + √(S² − 16y(uᵀv − y))` with `S = ‖u‖² + ‖v‖²`, the unscaled `Q` of a state.
pub fn q_bar(y: f64, s: &ScalarState) -> f64 {
    let sn = s.sq_norm();
    sn + (sn * sn - 16.0 * y * (s.dot() - y)).max(0.0).sqrt()
}

/// Largest step from which GD on the unregularized loss started at `(u0, v0)`
/// still converges to a global minimizer: `min{1/|y|, 8/q̄}`.
pub fn critical_step_size(y: f64, u0: &[f64], v0: &[f64]) -> Result<f64> {
    let s = ScalarState::new(u0.to_vec(), v0.to_vec())?;
    Ok(critical_step_size_of(y, &s))
}

pub fn critical_step_size_of(y: f64, s: &ScalarState) -> f64 {
    let first = if y == 0.0 { f64::INFINITY } else { 1.0 / y.abs() };
    let qb = q_bar(y, s);
    let second = if qb == 0.0 { f64::INFINITY } else { 8.0 / qb };
    first.min(second)
}

/// The earlier, weaker bound `min{1/(3|y|), 4/(S + 4|y|)}`.
pub fn prior_critical_bound(y: f64, s: &ScalarState) -> f64 {
    let first = if y == 0.0 { f64::INFINITY } else { 1.0 / (3.0 * y.abs()) };
    let denom = s.sq_norm() + 4.0 * y.abs();
    let second = if denom == 0.0 { f64::INFINITY } else { 4.0 / denom };
    first.min(second)
}

/// Whether `s` lies in the smooth convergence region `{q̄ < 8/η}`.
pub fn in_domain_dprime(y: f64, eta: f64, s: &ScalarState) -> bool {
    q_bar(y, s) < 8.0 / eta
}

/// Upper bound `½(4/η + |y|)²` on the unregularized loss along any trajectory that
/// starts in `{q̄ < 8/η}`: `Q` does not increase there and `Q ≥ η(‖u‖² + ‖v‖²)`.
pub fn dprime_loss_bound(y: f64, eta: f64) -> f64 {
    0.5 * (4.0 / eta + y.abs()).powi(2)
}

/// Stopping rules for deciding convergence at step `eta`: the divergence threshold
/// sits above [`dprime_loss_bound`], so transient loss spikes inside the convergence
/// region are not mistaken for divergence.
pub fn decision_config(y: f64, eta: f64, max_iters: usize) -> Result<StepConfig> {
    let th = (2.0 * dprime_loss_bound(y, eta)).max(StepConfig::DEFAULT_DIVERGENCE);
    StepConfig::new(eta, max_iters)?.with_divergence_threshold(th)
}

/// `(8/(4λ + q̄), 4/(4λ + q̄))`: below the first, GD converges to a global
/// minimizer; below the second, it converges to the nearest one. Both guarantees
/// also require `η(λ + |y|) ≤ 1` and `ηλ ≤ ½`.
pub fn small_step_thresholds(y: f64, lambda: f64, s: &ScalarState) -> (f64, f64) {
    let d = 4.0 * lambda + q_bar(y, s);
    (8.0 / d, 4.0 / d)
}

/// Below this norm `u + sgn(y)v` is treated as zero and `p±` is undefined.
pub const DEGENERATE_DIRECTION_TOL: f64 = 1e-12;

fn sgn(y: f64) -> f64 {
    if y >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Nearest and farthest global minimizers `(p⁻, p⁺)` of `s` on a sphere-shaped set.
pub fn p_minus_p_plus(m: &MinimizerSet, s: &ScalarState) -> Result<(ScalarState, ScalarState)> {
    if m.kind != MinimizerKind::Sphere {
        return Err(Error::Degenerate(format!("p± needs a sphere of minimizers, got {:?}", m.kind)));
    }
    let sg = sgn(m.y);
    let dir: Vec<f64> = s.u.iter().zip(&s.v).map(|(u, v)| u + sg * v).collect();
    let norm = scalar::dot(&dir, &dir).sqrt();
    if norm < DEGENERATE_DIRECTION_TOL {
        return Err(Error::Degenerate("u + sgn(y)v vanishes; p± is undefined".into()));
    }
    let r = m.radius_sq.sqrt();
    let u: Vec<f64> = dir.iter().map(|x| r * x / norm).collect();
    let v: Vec<f64> = u.iter().map(|x| sg * x).collect();
    let minus = ScalarState { u: u.clone(), v: v.clone() };
    let plus = ScalarState { u: u.iter().map(|x| -x).collect(), v: v.iter().map(|x| -x).collect() };
    Ok((minus, plus))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Selection {
    PMinus,
    PPlus,
}

/// A simulation outcome annotated with diagnostics of its limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedOutcome {
    pub outcome: Outcome,
    pub sq_norm: f64,
    pub imbalance: f64,
    /// `‖u‖² + ‖v‖² < 2/η`; minimizers at or above this are unstable.
    pub stable: bool,
    /// For sphere-shaped minimizer sets, which of `p±(s0)` the limit is nearer to.
    pub selection: Option<Selection>,
    /// Distance from the final state to the selected minimizer.
    pub selection_distance: Option<f64>,
}

pub fn classify_outcome(p: &ScalarProblem, c: &StepConfig, s0: &ScalarState) -> Result<ClassifiedOutcome> {
    let outcome = scalar::simulate(p, c, s0)?;
    let fin = &outcome.final_state;
    let sq_norm = fin.sq_norm();
    let mut selection = None;
    let mut selection_distance = None;
    let m = MinimizerSet::of(p);
    if outcome.kind == OutcomeKind::ConvergedMinimizer && m.kind == MinimizerKind::Sphere {
        if let Ok((pm, pp)) = p_minus_p_plus(&m, s0) {
            let (dm, dp) = (fin.distance(&pm), fin.distance(&pp));
            if dm <= dp {
                selection = Some(Selection::PMinus);
                selection_distance = Some(dm);
            } else {
                selection = Some(Selection::PPlus);
                selection_distance = Some(dp);
            }
        }
    }
    Ok(ClassifiedOutcome {
        sq_norm,
        imbalance: imbalance(fin),
        stable: sq_norm < 2.0 / c.eta,
        selection,
        selection_distance,
        outcome,
    })
}

/// Bisects for the step size at which [`scalar::simulate`] stops converging.
///
/// Assumes convergence at `lo` and failure at `hi`. Returns the final bracket midpoint
/// once `(hi − lo)/lo < rel_tol`.
pub fn bisect_critical_eta(
    p: &ScalarProblem,
    s0: &ScalarState,
    mut lo: f64,
    mut hi: f64,
    max_iters: usize,
    rel_tol: f64,
) -> Result<f64> {
    let converges = |eta: f64| -> Result<bool> {
        let c = decision_config(p.y, eta, max_iters)?;
        Ok(scalar::simulate(p, &c, s0)?.kind == OutcomeKind::ConvergedMinimizer)
    };
    while (hi - lo) > rel_tol * lo {
        let mid = 0.5 * (lo + hi);
        if converges(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Two nearby initializations whose trajectories are forced to different targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessPair {
    pub a: ScalarState,
    pub b: ScalarState,
    /// Limit-branch steps used to pull the two preimages together.
    pub n_lim: usize,
    pub separation: f64,
}

/// Pulls the quotient points `ta` and `tb` toward the repelling boundary point with
/// the limit branch until their lifts (oriented like `reference`) are within `eps`.
///
/// Forward GD from `a` passes through `ta` after `n_lim` steps, and from `b` through
/// `tb`, however small `eps` is.
pub fn witness_pair(
    p: &ScalarProblem,
    eta: f64,
    ta: QuotientState,
    tb: QuotientState,
    reference: &ScalarState,
    eps: f64,
    max_lim: usize,
) -> Result<WitnessPair> {
    let q = QuotientParams::from_problem(p, eta)?;
    let (mut xa, mut xb) = (ta, tb);
    for n_lim in 0..=max_lim {
        let a = quotient::lift(p, eta, xa, reference)?;
        let b = quotient::lift(p, eta, xb, reference)?;
        let separation = a.distance(&b);
        if separation < eps {
            return Ok(WitnessPair { a, b, n_lim, separation });
        }
        xa = quotient::g0_limit(&q, xa, 1)?;
        xb = quotient::g0_limit(&q, xb, 1)?;
    }
    Err(Error::SearchExhausted(format!("preimages still {eps:e} apart after {max_lim} limit-branch steps")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn critical_step_examples() {
        assert!((critical_step_size(0.0, &[1.0, 1.0], &[0.5, 0.0]).unwrap() - 4.0 / 2.25).abs() < 1e-15);
        assert_eq!(critical_step_size(1.0, &[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        // ‖‖² = 18, uv = 9: 8/(18 + √(324 − 128)) = 0.25
        assert!((critical_step_size(1.0, &[3.0], &[3.0]).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(critical_step_size(0.0, &[0.0], &[0.0]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn bisection_matches_formula_on_example() {
        let p = ScalarProblem::unregularized(1.0, 2).unwrap();
        let s = ScalarState::new(vec![1.0, 0.0], vec![0.0, 1.0]).unwrap();
        let est = bisect_critical_eta(&p, &s, 0.05, 1.5, 200_000, 1e-4).unwrap();
        assert!((est - 1.0).abs() < 1e-3, "{est}");
    }

    #[test]
    fn dprime_examples() {
        assert!(in_domain_dprime(1.0, 0.2, &ScalarState::zeros(3)));
        // step size putting s exactly on the boundary
        let s = ScalarState::scalar(1.0, 1.0);
        let eta = 8.0 / q_bar(1.0, &s);
        assert!(!in_domain_dprime(1.0, eta, &s));
        assert!(in_domain_dprime(1.0, eta * (1.0 - 1e-12), &s));
    }

    #[test]
    fn threshold_examples() {
        let s = ScalarState::scalar(1.0, 1.0);
        let (a, b) = small_step_thresholds(0.5, 0.2, &s);
        assert!((a - 8.0 / 2.8).abs() < 1e-14 && (b - 4.0 / 2.8).abs() < 1e-14);
        assert_eq!(a, 2.0 * b);
        let s = ScalarState::new(vec![0.3, -1.0], vec![1.2, 0.4]).unwrap();
        let (a, _) = small_step_thresholds(0.7, 0.0, &s);
        assert_eq!(a, 8.0 / q_bar(0.7, &s));
    }

    #[test]
    fn p_pm_example() {
        let p = ScalarProblem::new(0.5, 0.2, 1).unwrap();
        let m = MinimizerSet::of(&p);
        assert_eq!(m.kind, MinimizerKind::Sphere);
        let (pm, pp) = p_minus_p_plus(&m, &ScalarState::scalar(1.0, 1.0)).unwrap();
        let r = 0.3f64.sqrt();
        assert!((pm.u[0] - r).abs() < 1e-15 && (pm.v[0] - r).abs() < 1e-15);
        assert!((pp.u[0] + r).abs() < 1e-15 && (pp.v[0] + r).abs() < 1e-15);
        assert!(p_minus_p_plus(&m, &ScalarState::scalar(1.0, -1.0)).is_err());
        let m0 = MinimizerSet::of(&ScalarProblem::new(0.5, 0.0, 1).unwrap());
        assert_eq!(m0.kind, MinimizerKind::Hyperboloid);
        assert!(p_minus_p_plus(&m0, &ScalarState::scalar(1.0, 1.0)).is_err());
        assert_eq!(MinimizerSet::of(&ScalarProblem::new(0.5, 0.6, 1).unwrap()).kind, MinimizerKind::OriginOnly);
    }

    #[test]
    fn prior_bound_is_smaller() {
        let s = ScalarState::new(vec![0.4, 1.1], vec![-0.2, 0.9]).unwrap();
        for y in [0.3, -1.2, 2.0] {
            assert!(prior_critical_bound(y, &s) < critical_step_size_of(y, &s));
        }
    }

    #[test]
    fn classify_stable_minimizer() {
        let p = ScalarProblem::new(0.5, 0.2, 1).unwrap();
        let r = 0.3f64.sqrt();
        let c = StepConfig::new(1.0, 100).unwrap();
        let out = classify_outcome(&p, &c, &ScalarState::scalar(r, r)).unwrap();
        assert!(out.stable);
        assert_eq!(out.selection, Some(Selection::PMinus));
        assert_eq!(out.outcome.iterations, 0);
    }

    #[test]
    fn small_step_example_selects_p_minus() {
        let p = ScalarProblem::new(0.5, 0.2, 1).unwrap();
        let c = StepConfig::new(1.0, 100_000).unwrap().with_loss_tol(1e-14).unwrap();
        let out = classify_outcome(&p, &c, &ScalarState::scalar(1.0, 1.0)).unwrap();
        assert_eq!(out.selection, Some(Selection::PMinus));
        assert!(out.selection_distance.unwrap() < 1e-6);
    }
}

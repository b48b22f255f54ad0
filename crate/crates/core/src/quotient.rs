//! Planar quotient of scalar gradient descent.
//!
//! GD on `(u, v)` factors through `T(u, v) = (uᵀv, ‖u‖² + ‖v‖²)`. In residual
//! coordinates `(uᵀv − y, ‖u‖² + ‖v‖²)` the induced map is [`unscaled_step`]; after
//! scaling both coordinates by `η` it becomes [`quotient_step`], which depends only
//! on `μ = ηy` and `ν = ηλ` and acts on the cone `Ω = {w ≥ 2|z + μ|}`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::poly;
use crate::scalar::{ScalarProblem, ScalarState};

/// Numerical tolerances for quotient-space operations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Absolute residual allowed on `F(x) = target` when accepting a preimage.
    pub verify: f64,
    /// Distance to `∂Ω` (scaled by `max(1, |w|)`) counted as on the boundary.
    pub geom: f64,
    /// Negative radicand in `Q` that is clamped to zero rather than reported.
    pub radicand: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { verify: 1e-9, geom: 1e-12, radicand: 1e-12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuotientParams {
    pub mu: f64,
    pub nu: f64,
    pub tol: Tolerances,
}

impl QuotientParams {
    pub fn new(mu: f64, nu: f64) -> Result<Self> {
        if !mu.is_finite() || !nu.is_finite() {
            return Err(invalid("mu and nu must be finite"));
        }
        Ok(Self { mu, nu, tol: Tolerances::default() })
    }

    /// `μ = ηy`, `ν = ηλ`.
    pub fn from_problem(p: &ScalarProblem, eta: f64) -> Result<Self> {
        if !(eta > 0.0) {
            return Err(invalid(format!("eta must be positive, got {eta}")));
        }
        Self::new(eta * p.y, eta * p.lambda)
    }

    pub fn with_tolerances(self, tol: Tolerances) -> Self {
        Self { tol, ..self }
    }

    /// `1 − ν`.
    pub fn alpha(&self) -> f64 {
        1.0 - self.nu
    }

    /// Requires `0 ≤ ν < 1 − |μ|`, the regime where the three inverse branches exist.
    pub fn check_branch_regime(&self) -> Result<()> {
        if self.nu >= 0.0 && self.nu < 1.0 - self.mu.abs() {
            Ok(())
        } else {
            Err(invalid(format!("branch maps need 0 <= nu < 1 - |mu|, got mu={}, nu={}", self.mu, self.nu)))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuotientState {
    pub z: f64,
    pub w: f64,
}

impl QuotientState {
    pub fn new(z: f64, w: f64) -> Self {
        Self { z, w }
    }

    pub fn distance(&self, o: &QuotientState) -> f64 {
        (self.z - o.z).hypot(self.w - o.w)
    }

    pub fn is_finite(&self) -> bool {
        self.z.is_finite() && self.w.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BranchId {
    G0,
    G1,
    G2,
}

impl BranchId {
    pub const ALL: [BranchId; 3] = [BranchId::G0, BranchId::G1, BranchId::G2];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OmegaClass {
    Interior,
    Boundary,
    Outside,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Monotonicity {
    Decrease,
    Increase,
    InvariantSet,
}

/// `(uᵀv, ‖u‖² + ‖v‖²)`.
pub fn project_raw(s: &ScalarState) -> (f64, f64) {
    (s.dot(), s.sq_norm())
}

/// `(uᵀv − y, ‖u‖² + ‖v‖²)`, the coordinates [`unscaled_step`] acts on.
pub fn project_residual(p: &ScalarProblem, s: &ScalarState) -> (f64, f64) {
    (s.dot() - p.y, s.sq_norm())
}

/// `(η(uᵀv − y), η(‖u‖² + ‖v‖²))`, the coordinates [`quotient_step`] acts on.
pub fn project_scaled(s: &ScalarState, p: &ScalarProblem, eta: f64) -> Result<QuotientState> {
    if !(eta > 0.0) {
        return Err(invalid(format!("eta must be positive, got {eta}")));
    }
    Ok(QuotientState::new(eta * (s.dot() - p.y), eta * s.sq_norm()))
}

/// A state in the fiber over `s` (scaled coordinates), oriented like `reference`.
///
/// Writes `u = (a + b)/√2`, `v = (a − b)/√2` with `‖a‖² = (S + 2uᵀv)/2` and
/// `‖b‖² = (S − 2uᵀv)/2`, taking the directions of `a` and `b` from the same
/// combinations of `reference` (or the first axis when those vanish).
pub fn lift(p: &ScalarProblem, eta: f64, s: QuotientState, reference: &ScalarState) -> Result<ScalarState> {
    if !(eta > 0.0) {
        return Err(invalid(format!("eta must be positive, got {eta}")));
    }
    if reference.dim() != p.d {
        return Err(Error::DimensionMismatch { expected: p.d, got: reference.dim() });
    }
    let uv = s.z / eta + p.y;
    let sn = s.w / eta;
    let slack = 1e-12 * sn.abs().max(1.0);
    if sn < 2.0 * uv.abs() - slack {
        return Err(Error::Domain(format!("no real lift of (z, w) = ({}, {}): S < 2|uv|", s.z, s.w)));
    }
    let a_norm = (0.5 * (sn + 2.0 * uv)).max(0.0).sqrt();
    let b_norm = (0.5 * (sn - 2.0 * uv)).max(0.0).sqrt();
    let unit = |sign: f64| -> Vec<f64> {
        let dir: Vec<f64> = reference.u.iter().zip(&reference.v).map(|(u, v)| u + sign * v).collect();
        let n = crate::scalar::dot(&dir, &dir).sqrt();
        if n > 0.0 {
            dir.iter().map(|x| x / n).collect()
        } else {
            let mut e = vec![0.0; p.d];
            e[0] = 1.0;
            e
        }
    };
    let (ea, eb) = (unit(1.0), unit(-1.0));
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let u = ea.iter().zip(&eb).map(|(x, y)| r * (a_norm * x + b_norm * y)).collect();
    let v = ea.iter().zip(&eb).map(|(x, y)| r * (a_norm * x - b_norm * y)).collect();
    Ok(ScalarState { u, v })
}

/// Quotient map in residual coordinates `(z, w) = (uᵀv − y, ‖u‖² + ‖v‖²)`.
pub fn unscaled_step(eta: f64, y: f64, lambda: f64, zw: (f64, f64)) -> (f64, f64) {
    let (z, w) = zw;
    let e2 = eta * eta;
    let a = 1.0 - eta * lambda;
    let zn = e2 * z * z * z + e2 * y * z * z + (a * a - eta * w + e2 * lambda * w) * z + y * e2 * lambda * lambda
        - 2.0 * y * eta * lambda;
    let wn = (a * a + e2 * z * z) * w - 4.0 * eta * z * a * (z + y);
    (zn, wn)
}

/// The scaled quotient map `F`.
pub fn quotient_step(q: &QuotientParams, s: QuotientState) -> QuotientState {
    let QuotientState { z, w } = s;
    let (mu, nu) = (q.mu, q.nu);
    let a = 1.0 - nu;
    let zn = z * z * z + mu * z * z + (a * a - w + nu * w) * z + nu * nu * mu - 2.0 * mu * nu;
    let wn = (a * a + z * z) * w - 4.0 * z * a * (z + mu);
    QuotientState::new(zn, wn)
}

/// `F` iterated `n` times.
pub fn forward(q: &QuotientParams, mut s: QuotientState, n: usize) -> QuotientState {
    for _ in 0..n {
        s = quotient_step(q, s);
    }
    s
}

/// Jacobian of `F` as `[[∂z'/∂z, ∂z'/∂w], [∂w'/∂z, ∂w'/∂w]]`.
pub fn quotient_jacobian(q: &QuotientParams, s: QuotientState) -> [[f64; 2]; 2] {
    let QuotientState { z, w } = s;
    let a = q.alpha();
    [[3.0 * z * z + 2.0 * q.mu * z + a * a - a * w, -a * z], [2.0 * z * w - 4.0 * a * (2.0 * z + q.mu), a * a + z * z]]
}

pub(crate) fn q_unchecked(mu: f64, s: QuotientState) -> f64 {
    s.w + (s.w * s.w - 16.0 * mu * s.z).max(0.0).sqrt()
}

/// `Q(z, w) = w + √(w² − 16μz)`.
pub fn q_value(q: &QuotientParams, s: QuotientState) -> Result<f64> {
    if omega_membership(q, s) == OmegaClass::Outside {
        return Err(Error::Domain(format!("({}, {}) is outside the cone", s.z, s.w)));
    }
    let rad = s.w * s.w - 16.0 * q.mu * s.z;
    if rad < -q.tol.radicand * s.w.abs().max(1.0).powi(2) {
        return Err(Error::Domain(format!("negative radicand {rad:e} in Q")));
    }
    Ok(s.w + rad.max(0.0).sqrt())
}

pub fn omega_membership(q: &QuotientParams, s: QuotientState) -> OmegaClass {
    let gap = s.w - 2.0 * (s.z + q.mu).abs();
    let tol = q.tol.geom * s.w.abs().max(1.0);
    if !gap.is_finite() {
        OmegaClass::Outside
    } else if gap.abs() <= tol {
        OmegaClass::Boundary
    } else if gap > 0.0 {
        OmegaClass::Interior
    } else {
        OmegaClass::Outside
    }
}

/// Which way `Q` moves under one step of `F`.
///
/// For `ν = 0` the invariant set is `{w = μz + 4} ∪ {z = 0} ∪ {Q = 4|μ|}` (matched
/// within `tol.verify`) and off it the sign of `Q∘F − Q` is the sign of `w − μz − 4`.
/// For `ν > 0`, `Q` decreases iff `z² ≤ 2ν − ν²` or `w` lies below the curve
/// `−μ(z² − 2ν + ν²)/(z(ν − 1)) − 4z²(ν − 1)/(ν² − 2ν + z²)`.
pub fn monotonicity_class(q: &QuotientParams, s: QuotientState) -> Monotonicity {
    let QuotientState { z, w } = s;
    let (mu, nu) = (q.mu, q.nu);
    let tol = q.tol.verify;
    if nu == 0.0 {
        let line = w - mu * z - 4.0;
        let on_floor = (q_unchecked(mu, s) - 4.0 * mu.abs()).abs() <= tol;
        if line.abs() <= tol || z.abs() <= tol || on_floor {
            Monotonicity::InvariantSet
        } else if line < 0.0 {
            Monotonicity::Decrease
        } else {
            Monotonicity::Increase
        }
    } else {
        let gap = 2.0 * nu - nu * nu;
        if z * z <= gap {
            return Monotonicity::Decrease;
        }
        let curve = -mu * (z * z - gap) / (z * (nu - 1.0)) - 4.0 * z * z * (nu - 1.0) / (z * z - gap);
        if w < curve {
            Monotonicity::Decrease
        } else {
            Monotonicity::Increase
        }
    }
}

/// Coefficients (lowest degree first) of the quintic whose real roots are the
/// `z`-coordinates of preimages of `target`.
///
/// Eliminating `w` from `F(z, w) = (z₀, w₀)` gives `A(z)C(z) = (1 − ν)z B(z)` with
/// `A = z³ + μz² + (1 − ν)²z + ν²μ − 2μν − z₀`, `B = 4z(1 − ν)(z + μ) + w₀` and
/// `C = z² + (1 − ν)²`; the preimage then has `w = B/C`.
pub fn preimage_quintic(q: &QuotientParams, target: QuotientState) -> [f64; 6] {
    let (mu, a) = (q.mu, q.alpha());
    let (z0, w0) = (target.z, target.w);
    let c0 = q.nu * q.nu * mu - 2.0 * mu * q.nu - z0;
    let a2 = a * a;
    [c0 * a2, a2 * a2 - a * w0, c0 - 3.0 * mu * a2, -2.0 * a2, mu, 1.0]
}

fn preimage_w(q: &QuotientParams, target: QuotientState, z: f64) -> f64 {
    let a = q.alpha();
    (4.0 * z * a * (z + q.mu) + target.w) / (z * z + a * a)
}

fn residual(q: &QuotientParams, x: QuotientState, target: QuotientState) -> f64 {
    let f = quotient_step(q, x);
    (f.z - target.z).abs().max((f.w - target.w).abs())
}

/// Newton refinement of `F(x) = target`, keeping only improving steps.
fn polish(q: &QuotientParams, mut x: QuotientState, target: QuotientState, iters: usize) -> QuotientState {
    let mut r = residual(q, x, target);
    for _ in 0..iters {
        if r == 0.0 {
            break;
        }
        let f = quotient_step(q, x);
        let [[a, b], [c, d]] = quotient_jacobian(q, x);
        let det = a * d - b * c;
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let (fz, fw) = (f.z - target.z, f.w - target.w);
        let cand = QuotientState::new(x.z - (d * fz - b * fw) / det, x.w - (a * fw - c * fz) / det);
        let rc = residual(q, cand, target);
        if !(rc < r) {
            break;
        }
        x = cand;
        r = rc;
    }
    x
}

/// Every verified preimage of `target` in `Ω`, sorted by `z`.
pub fn preimage_all(q: &QuotientParams, target: QuotientState) -> Result<Vec<QuotientState>> {
    q.check_branch_regime()?;
    if omega_membership(q, target) == OmegaClass::Outside {
        return Err(Error::Domain(format!("target ({}, {}) is outside the cone", target.z, target.w)));
    }
    let coeffs = preimage_quintic(q, target);
    let mut zs = poly::real_roots(&coeffs, 1e-5, 3);
    // the z = 0 candidate, checked against the full system; z = ±(1 − ν) map onto ∂Ω
    // and give double roots there, which the polynomial solver can lose
    zs.extend([0.0, -q.alpha(), q.alpha()]);

    let mut best = f64::INFINITY;
    let mut out: Vec<QuotientState> = Vec::with_capacity(5);
    for z in zs {
        let x = QuotientState::new(z, preimage_w(q, target, z));
        let x = polish(q, x, target, 4);
        let r = residual(q, x, target);
        best = best.min(r);
        if !(r <= q.tol.verify) || omega_membership(q, x) == OmegaClass::Outside {
            continue;
        }
        if out.iter().any(|o| o.distance(&x) <= 1e-7 * (1.0 + x.w.abs())) {
            continue;
        }
        out.push(x);
    }
    if out.is_empty() {
        return Err(Error::RootFinding {
            residual: best,
            reason: format!("no verified preimage of ({}, {})", target.z, target.w),
        });
    }
    out.sort_by(|a, b| a.z.total_cmp(&b.z));
    Ok(out)
}

/// Slack on the branch `z`-ranges when assigning roots. Roots near the fold lines
/// `z = ±(1 − ν)` are double roots for targets on ∂Ω and come out only to ~1e-8.
const BRANCH_TOL: f64 = 1e-7;

/// The preimage of `target` under branch `b`.
///
/// Preimages are sorted by `z`; `G0` takes the smallest (which must have
/// `z ≤ ν − 1`), `G2` the largest (`z ≥ 1 − ν`) and `G1` a remaining one with
/// `|z| ≤ 1 − ν`, which exists only when `Q(target) ≥ 6 − 4ν`.
pub fn branch_inverse(q: &QuotientParams, b: BranchId, target: QuotientState) -> Result<QuotientState> {
    let a = q.alpha();
    let err = |reason: String| Error::BranchDomain { branch: b, z: target.z, w: target.w, reason };
    if b == BranchId::G1 {
        let qt = q_value(q, target)?;
        if qt < 6.0 - 4.0 * q.nu - BRANCH_TOL {
            return Err(err(format!("Q = {qt} is below 6 - 4nu = {}", 6.0 - 4.0 * q.nu)));
        }
    }
    let roots = preimage_all(q, target)?;
    let first = roots[0];
    let last = roots[roots.len() - 1];
    match b {
        BranchId::G0 if first.z <= -a + BRANCH_TOL => Ok(first),
        BranchId::G2 if last.z >= a - BRANCH_TOL => Ok(last),
        BranchId::G1 => {
            let lo = usize::from(first.z <= -a + BRANCH_TOL);
            let hi = roots.len() - usize::from(roots.len() > lo && last.z >= a - BRANCH_TOL);
            roots[lo..hi]
                .iter()
                .copied()
                .find(|x| x.z.abs() <= a + BRANCH_TOL)
                .ok_or_else(|| err(format!("no preimage with |z| <= {a} among {} roots", roots.len())))
        }
        _ => Err(err(format!("no preimage in the branch range among {} roots", roots.len()))),
    }
}

/// The branch iterated to reach the repelling boundary fixed point: `G0` for
/// `μ ≥ 0` and its mirror `G2` for `μ < 0`.
pub fn limit_branch(q: &QuotientParams) -> BranchId {
    if q.mu >= 0.0 {
        BranchId::G0
    } else {
        BranchId::G2
    }
}

/// Fixed point of [`limit_branch`]: `(ν − 2, 4 − 2(ν + μ))` for `μ ≥ 0`, and the
/// mirror image `(2 − ν, 4 − 2ν + 2μ)` under `(z, μ) ↦ (−z, −μ)` for `μ < 0`.
pub fn limit_point(q: &QuotientParams) -> QuotientState {
    if q.mu >= 0.0 {
        QuotientState::new(q.nu - 2.0, 4.0 - 2.0 * (q.nu + q.mu))
    } else {
        QuotientState::new(2.0 - q.nu, 4.0 - 2.0 * q.nu + 2.0 * q.mu)
    }
}

fn check_limit_regime(q: &QuotientParams) -> Result<()> {
    q.check_branch_regime()?;
    if q.nu >= 0.5 {
        return Err(invalid(format!("limit construction needs nu < 1/2, got {}", q.nu)));
    }
    Ok(())
}

/// [`limit_branch`] applied `n` times to `start`.
pub fn g0_limit(q: &QuotientParams, start: QuotientState, n: usize) -> Result<QuotientState> {
    check_limit_regime(q)?;
    let b = limit_branch(q);
    let mut x = start;
    for step in 0..n {
        x = branch_inverse(q, b, x).map_err(|e| Error::Composition { step, source: Box::new(e) })?;
    }
    Ok(x)
}

/// `G_suffix ∘ G_lim^{n_lim}(target)`, with `suffix[0]` applied first.
///
/// `F^{n_lim + suffix.len()}` of the result is `target`. Errors carry the index of
/// the failing composition step, counting the limit-branch steps first.
pub fn reach_initial(
    q: &QuotientParams,
    target: QuotientState,
    suffix: &[BranchId],
    n_lim: usize,
) -> Result<QuotientState> {
    if n_lim > 0 {
        check_limit_regime(q)?;
    }
    let b = limit_branch(q);
    let mut x = target;
    for (step, &br) in std::iter::repeat_n(&b, n_lim).chain(suffix).enumerate() {
        x = branch_inverse(q, br, x).map_err(|e| Error::Composition { step, source: Box::new(e) })?;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(mu: f64, nu: f64) -> QuotientParams {
        QuotientParams::new(mu, nu).unwrap()
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_raw(&ScalarState::zeros(2)), (0.0, 0.0));
        let s = ScalarState::new(vec![1.0, 0.0], vec![0.0, 1.0]).unwrap();
        assert_eq!(project_raw(&s), (0.0, 2.0));
        assert_eq!(project_raw(&ScalarState::scalar(1.0, 1.0)), (1.0, 2.0));

        let pr = ScalarProblem::new(1.0, 0.0, 1).unwrap();
        let x = project_scaled(&ScalarState::scalar(1.0, 1.0), &pr, 0.5).unwrap();
        assert_eq!(x, QuotientState::new(0.0, 1.0));
        let x = project_scaled(&ScalarState::scalar(0.0, 0.0), &pr, 0.3).unwrap();
        assert_eq!(x, QuotientState::new(-0.3, 0.0));
    }

    #[test]
    fn unscaled_examples() {
        assert_eq!(unscaled_step(0.4, 1.3, 0.0, (0.0, 2.5)), (0.0, 2.5));
        let (z, w) = unscaled_step(0.4, 1.3, 0.2, (-1.3, 0.0));
        assert!((z + 1.3).abs() < 1e-15 && w.abs() < 1e-15);
    }

    #[test]
    fn quotient_examples() {
        assert_eq!(quotient_step(&p(0.0, 0.0), QuotientState::new(1.0, 2.0)), QuotientState::new(0.0, 0.0));
        let x = QuotientState::new(0.0, 3.7);
        assert_eq!(quotient_step(&p(0.6, 0.0), x), x);
    }

    #[test]
    fn q_examples() {
        let q = p(0.3, 0.1);
        assert_eq!(q_value(&q, QuotientState::new(0.0, 1.5)).unwrap(), 3.0);
        assert_eq!(q_value(&p(0.5, 0.0), QuotientState::new(0.5, 2.0)).unwrap(), 2.0);
        // floor set w = 2 sgn(μ)(z + μ), w ≤ 4|μ|
        for &(mu, t) in &[(0.5, 0.3), (0.5, 1.9), (-0.4, 0.7)] {
            let q = p(mu, 0.0);
            let w = t;
            let z = w / (2.0 * mu.signum()) - mu;
            assert!((q_value(&q, QuotientState::new(z, w)).unwrap() - 4.0 * mu.abs()).abs() < 1e-12);
        }
        assert!(q_value(&q, QuotientState::new(0.0, -1.0)).is_err());
    }

    #[test]
    fn omega_examples() {
        let q = p(0.4, 0.0);
        assert_eq!(omega_membership(&q, QuotientState::new(-0.4, 0.0)), OmegaClass::Boundary);
        assert_eq!(omega_membership(&p(0.0, 0.0), QuotientState::new(0.0, 1.0)), OmegaClass::Interior);
        assert_eq!(omega_membership(&q, QuotientState::new(0.0, -1.0)), OmegaClass::Outside);
    }

    #[test]
    fn monotonicity_examples() {
        assert_eq!(monotonicity_class(&p(0.3, 0.0), QuotientState::new(0.0, 2.0)), Monotonicity::InvariantSet);
        let q = p(0.0, 0.0);
        let x = QuotientState::new(1.0, 2.0);
        assert_eq!(monotonicity_class(&q, x), Monotonicity::Decrease);
        let before = q_value(&q, x).unwrap();
        let after = q_value(&q, quotient_step(&q, x)).unwrap();
        assert!(after < before);
    }

    #[test]
    fn quintic_matches_expanded_form() {
        let q = p(0.37, 0.21);
        let t = QuotientState::new(0.4, 3.1);
        let (mu, nu, z0, w0) = (q.mu, q.nu, t.z, t.w);
        let want = [
            (nu - 1.0).powi(2) * (mu * nu * (nu - 2.0) - z0),
            (nu - 1.0) * (nu.powi(3) - 3.0 * nu * nu + 3.0 * nu + w0 - 1.0),
            (-2.0 * nu * nu + 4.0 * nu - 3.0) * mu - z0,
            -2.0 * (nu - 1.0).powi(2),
            mu,
            1.0,
        ];
        for (a, b) in preimage_quintic(&q, t).iter().zip(want) {
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
    }

    #[test]
    fn three_preimages_above_the_g1_threshold() {
        let q = p(0.5, 0.2);
        let t = QuotientState::new(0.2, 4.0);
        assert!(q_value(&q, t).unwrap() > 6.0 - 4.0 * q.nu);
        let pre = preimage_all(&q, t).unwrap();
        assert_eq!(pre.len(), 3);
        for x in &pre {
            assert!(residual(&q, *x, t) <= 1e-9);
        }
        let g: Vec<_> = BranchId::ALL.iter().map(|&b| branch_inverse(&q, b, t).unwrap()).collect();
        assert!(g[0].z <= q.nu - 1.0);
        assert!(g[1].z.abs() <= 1.0 - q.nu);
        assert!(g[2].z >= 1.0 - q.nu);
    }

    #[test]
    fn g1_outside_domain_errors() {
        let q = p(0.5, 0.2);
        let t = QuotientState::new(0.0, 1.5);
        assert!(q_value(&q, t).unwrap() < 6.0 - 4.0 * q.nu);
        assert!(matches!(branch_inverse(&q, BranchId::G1, t), Err(Error::BranchDomain { .. })));
        assert!(branch_inverse(&q, BranchId::G0, t).is_ok());
        assert!(branch_inverse(&q, BranchId::G2, t).is_ok());
    }

    #[test]
    fn zero_root_candidate() {
        // target with z₀ = ν²μ − 2μν has z = 0 as an exact preimage coordinate
        let q = p(0.3, 0.2);
        let t = QuotientState::new(q.nu * q.nu * q.mu - 2.0 * q.mu * q.nu, 3.0);
        let pre = preimage_all(&q, t).unwrap();
        let w = 3.0 / (q.alpha() * q.alpha());
        assert!(pre.iter().any(|x| x.z.abs() < 1e-12 && (x.w - w).abs() < 1e-9));
    }

    #[test]
    fn limit_points() {
        for &(mu, nu) in &[(0.5, 0.2), (0.0, 0.0), (0.3, 0.1), (-0.5, 0.2), (-0.2, 0.0)] {
            let q = p(mu, nu);
            let xi = limit_point(&q);
            assert!(quotient_step(&q, xi).distance(&xi) < 1e-12, "mu={mu} nu={nu}");
            assert_eq!(omega_membership(&q, xi), OmegaClass::Boundary);
            assert!((q_value(&q, xi).unwrap() - (8.0 - 4.0 * nu)).abs() < 1e-12);
            let x = g0_limit(&q, QuotientState::new(0.0, 3.0), 200).unwrap();
            assert!(x.distance(&xi) < 1e-8, "mu={mu} nu={nu}: {x:?}");
        }
        assert_eq!(limit_point(&p(0.5, 0.2)), QuotientState::new(-1.8, 2.6));
        assert_eq!(limit_point(&p(0.0, 0.0)), QuotientState::new(-2.0, 4.0));
    }

    #[test]
    fn g0_iterates_approach_limit() {
        let q = p(0.5, 0.2);
        let xi = limit_point(&q);
        let mut x = QuotientState::new(0.0, 3.0);
        let mut d = Vec::new();
        for _ in 0..60 {
            x = branch_inverse(&q, BranchId::G0, x).unwrap();
            d.push(x.distance(&xi));
        }
        for k in 10..d.len() {
            assert!(d[k] <= d[k - 1] + 1e-15);
        }
    }

    #[test]
    fn reach_initial_contract() {
        let q = p(0.5, 0.2);
        let t = QuotientState::new(0.1, 3.5);
        assert_eq!(reach_initial(&q, t, &[], 0).unwrap(), t);
        let suffix = [BranchId::G1, BranchId::G2, BranchId::G0];
        let x = reach_initial(&q, t, &suffix, 6).unwrap();
        assert!(forward(&q, x, 9).distance(&t) < 1e-7);
    }

    #[test]
    fn reach_initial_reports_failing_step() {
        let q = p(0.5, 0.2);
        // G0 of this point has Q ≈ 4.43, outside G1's domain
        let t = QuotientState::new(-0.5, 0.2);
        match reach_initial(&q, t, &[BranchId::G0, BranchId::G1], 0) {
            Err(Error::Composition { step, .. }) => assert_eq!(step, 1),
            other => panic!("expected composition error, got {other:?}"),
        }
    }

    #[test]
    fn branch_regime_is_checked() {
        assert!(preimage_all(&p(0.9, 0.2), QuotientState::new(0.0, 3.0)).is_err());
        assert!(g0_limit(&p(0.1, 0.6), QuotientState::new(0.0, 3.0), 1).is_err());
    }
    #[test]
    fn lift_projects_back() {
        let pr = ScalarProblem::new(0.7, 0.0, 3).unwrap();
        let reference = ScalarState::new(vec![1.0, -2.0, 0.5], vec![0.3, 0.0, 1.0]).unwrap();
        for &(z, w) in &[(0.1, 2.0), (-0.5, 0.9), (0.0, 3.0)] {
            let x = QuotientState::new(z, w);
            let s = lift(&pr, 0.4, x, &reference).unwrap();
            let back = project_scaled(&s, &pr, 0.4).unwrap();
            assert!(back.distance(&x) < 1e-12, "{back:?}");
        }
        assert!(matches!(lift(&pr, 0.4, QuotientState::new(1.0, 0.1), &reference), Err(Error::Domain(_))));
        let flat =
            lift(&ScalarProblem::new(1.0, 0.0, 1).unwrap(), 0.5, QuotientState::new(0.0, 1.0), &ScalarState::zeros(1));
        assert!(flat.unwrap().distance(&ScalarState::scalar(1.0, 1.0)) < 1e-15);
    }
}

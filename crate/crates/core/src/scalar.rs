//! Scalar factorization: `L(u, v) = ½(uᵀv − y)² + (λ/2)(‖u‖² + ‖v‖²)` with
//! `u, v ∈ ℝᵈ`, and constant-step gradient descent on it.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Loss definition for the scalar problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarProblem {
    pub y: f64,
    pub lambda: f64,
    pub d: usize,
}

impl ScalarProblem {
    pub fn new(y: f64, lambda: f64, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(invalid("dimension d must be at least 1"));
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(invalid(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        if !y.is_finite() {
            return Err(invalid("target y must be finite"));
        }
        Ok(Self { y, lambda, d })
    }

    pub fn unregularized(y: f64, d: usize) -> Result<Self> {
        Self::new(y, 0.0, d)
    }

    /// Closed-form global minimum of the loss.
    ///
    /// For `λ < |y|` the minimizers satisfy `u = sgn(y)v`, `‖u‖² = |y| − λ`, where the
    /// residual is `uᵀv − y = −sgn(y)λ`, giving `λ²/2 + λ(|y| − λ) = λ|y| − λ²/2`.
    pub fn global_min(&self) -> f64 {
        let ay = self.y.abs();
        if self.lambda == 0.0 {
            0.0
        } else if self.lambda >= ay {
            0.5 * self.y * self.y
        } else {
            self.lambda * ay - 0.5 * self.lambda * self.lambda
        }
    }

    /// Whether the origin is a saddle rather than the minimizer.
    pub fn origin_is_saddle(&self) -> bool {
        self.lambda < self.y.abs()
    }

    fn check(&self, s: &ScalarState) -> Result<()> {
        if s.u.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: s.u.len() });
        }
        if s.v.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: s.v.len() });
        }
        Ok(())
    }
}

/// A parameter point `(u, v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl ScalarState {
    pub fn new(u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.len() != v.len() {
            return Err(Error::DimensionMismatch { expected: u.len(), got: v.len() });
        }
        if u.is_empty() {
            return Err(invalid("state vectors must be non-empty"));
        }
        if u.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(invalid("state entries must be finite"));
        }
        Ok(Self { u, v })
    }

    /// One-dimensional state `(u, v) ∈ ℝ²`.
    pub fn scalar(u: f64, v: f64) -> Self {
        Self { u: vec![u], v: vec![v] }
    }

    pub fn zeros(d: usize) -> Self {
        Self { u: vec![0.0; d], v: vec![0.0; d] }
    }

    pub fn dim(&self) -> usize {
        self.u.len()
    }

    pub fn dot(&self) -> f64 {
        dot(&self.u, &self.v)
    }

    /// `‖u‖² + ‖v‖²`.
    pub fn sq_norm(&self) -> f64 {
        dot(&self.u, &self.u) + dot(&self.v, &self.v)
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(self.v.iter()).all(|x| x.is_finite())
    }

    /// Euclidean distance in `ℝ²ᵈ`.
    pub fn distance(&self, other: &ScalarState) -> f64 {
        let du: f64 = self.u.iter().zip(&other.u).map(|(a, b)| (a - b) * (a - b)).sum();
        let dv: f64 = self.v.iter().zip(&other.v).map(|(a, b)| (a - b) * (a - b)).sum();
        (du + dv).sqrt()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Step size and stopping rules for [`simulate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub eta: f64,
    pub max_iters: usize,
    /// Convergence slack above the global minimum.
    pub loss_tol: f64,
    /// Loss value at which the run is declared divergent.
    pub divergence_threshold: f64,
    /// Distance to the origin at which the run is declared captured by the saddle.
    pub saddle_tol: f64,
}

impl StepConfig {
    pub const DEFAULT_LOSS_TOL: f64 = 1e-8;
    pub const DEFAULT_DIVERGENCE: f64 = 100.0;
    pub const DEFAULT_SADDLE_TOL: f64 = 1e-8;

    pub fn new(eta: f64, max_iters: usize) -> Result<Self> {
        Self {
            eta,
            max_iters,
            loss_tol: Self::DEFAULT_LOSS_TOL,
            divergence_threshold: Self::DEFAULT_DIVERGENCE,
            saddle_tol: Self::DEFAULT_SADDLE_TOL,
        }
        .validated()
    }

    /// Tolerances used for trajectory histograms (loss below `1e-8`, above `100`).
    pub fn histogram_preset(eta: f64, max_iters: usize) -> Result<Self> {
        Self::new(eta, max_iters)
    }

    /// Tolerances used for basin rasters (loss below `L_min + 1e-6`, above `100`).
    pub fn basin_preset(eta: f64, max_iters: usize) -> Result<Self> {
        Self { loss_tol: 1e-6, ..Self::new(eta, max_iters)? }.validated()
    }

    pub fn with_loss_tol(self, loss_tol: f64) -> Result<Self> {
        Self { loss_tol, ..self }.validated()
    }

    pub fn with_divergence_threshold(self, divergence_threshold: f64) -> Result<Self> {
        Self { divergence_threshold, ..self }.validated()
    }

    pub fn with_saddle_tol(self, saddle_tol: f64) -> Result<Self> {
        Self { saddle_tol, ..self }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(invalid(format!("eta must be positive and finite, got {}", self.eta)));
        }
        if !(self.loss_tol > 0.0) {
            return Err(invalid("loss_tol must be positive"));
        }
        if !(self.divergence_threshold > self.loss_tol) {
            return Err(invalid("divergence_threshold must exceed loss_tol"));
        }
        if !(self.saddle_tol >= 0.0) {
            return Err(invalid("saddle_tol must be non-negative"));
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutcomeKind {
    ConvergedMinimizer,
    ConvergedSaddle,
    Diverged,
    Undecided,
}

/// Terminal classification of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub kind: OutcomeKind,
    pub final_state: ScalarState,
    pub iterations: usize,
    pub final_loss: f64,
}

impl Outcome {
    pub fn converged(&self) -> bool {
        self.kind == OutcomeKind::ConvergedMinimizer
    }
}

pub fn scalar_loss(p: &ScalarProblem, s: &ScalarState) -> Result<f64> {
    p.check(s)?;
    Ok(loss_unchecked(p, s))
}

fn loss_unchecked(p: &ScalarProblem, s: &ScalarState) -> f64 {
    let r = s.dot() - p.y;
    0.5 * r * r + 0.5 * p.lambda * s.sq_norm()
}

/// `(∇ᵤL, ∇ᵥL) = ((uᵀv − y)v + λu, (uᵀv − y)u + λv)`.
pub fn scalar_gradient(p: &ScalarProblem, s: &ScalarState) -> Result<(Vec<f64>, Vec<f64>)> {
    p.check(s)?;
    let r = s.dot() - p.y;
    let gu = s.u.iter().zip(&s.v).map(|(u, v)| r * v + p.lambda * u).collect();
    let gv = s.u.iter().zip(&s.v).map(|(u, v)| r * u + p.lambda * v).collect();
    Ok((gu, gv))
}

/// One gradient descent step; both blocks are updated from the pre-step state.
pub fn gd_step(p: &ScalarProblem, eta: f64, s: &ScalarState) -> Result<ScalarState> {
    if !(eta > 0.0) {
        return Err(invalid(format!("eta must be positive, got {eta}")));
    }
    p.check(s)?;
    let mut next = s.clone();
    gd_step_in_place(p, eta, &mut next);
    Ok(next)
}

/// In-place variant of [`gd_step`] used by the simulation loops. Coordinates are
/// independent given the residual, so updating index by index is simultaneous.
pub(crate) fn gd_step_in_place(p: &ScalarProblem, eta: f64, s: &mut ScalarState) {
    let r = s.dot() - p.y;
    let shrink = 1.0 - eta * p.lambda;
    for (u, v) in s.u.iter_mut().zip(s.v.iter_mut()) {
        let (u0, v0) = (*u, *v);
        *u = shrink * u0 - eta * (r * v0);
        *v = shrink * v0 - eta * (r * u0);
    }
}

/// Iterates [`gd_step`] until one of the stopping rules in `c` fires.
pub fn simulate(p: &ScalarProblem, c: &StepConfig, s0: &ScalarState) -> Result<Outcome> {
    p.check(s0)?;
    c.validated()?;
    Ok(simulate_unchecked(p, c, s0.clone()))
}

pub(crate) fn simulate_unchecked(p: &ScalarProblem, c: &StepConfig, mut s: ScalarState) -> Outcome {
    let target = p.global_min() + c.loss_tol;
    let saddle_sq = c.saddle_tol * c.saddle_tol;
    let saddle = p.origin_is_saddle();
    let mut t = 0;
    loop {
        let loss = loss_unchecked(p, &s);
        let kind = if !loss.is_finite() || !s.is_finite() {
            Some(OutcomeKind::Diverged)
        } else if loss <= target {
            Some(OutcomeKind::ConvergedMinimizer)
        } else if saddle && s.sq_norm() <= saddle_sq {
            Some(OutcomeKind::ConvergedSaddle)
        } else if loss >= c.divergence_threshold {
            Some(OutcomeKind::Diverged)
        } else if t >= c.max_iters {
            Some(OutcomeKind::Undecided)
        } else {
            None
        };
        if let Some(kind) = kind {
            return Outcome { kind, final_state: s, iterations: t, final_loss: loss };
        }
        gd_step_in_place(p, c.eta, &mut s);
        t += 1;
    }
}

/// Hessian spectrum of the unregularized loss, sorted ascending.
///
/// With `r = uᵀv − y` and `S = ‖u‖² + ‖v‖²` the eigenvalues are `±r`, each with
/// multiplicity `d − 1`, and `½(S ± √(S² + 4r² + 8r·uᵀv))`.
pub fn hessian_eigenvalues_unregularized(p: &ScalarProblem, s: &ScalarState) -> Result<Vec<f64>> {
    if p.lambda != 0.0 {
        return Err(invalid("closed-form spectrum requires lambda = 0"));
    }
    p.check(s)?;
    let uv = s.dot();
    let r = uv - p.y;
    let sn = s.sq_norm();
    let disc = (sn * sn + 4.0 * r * r + 8.0 * r * uv).max(0.0).sqrt();
    let mut eig = Vec::with_capacity(2 * p.d);
    for _ in 1..p.d {
        eig.push(r);
        eig.push(-r);
    }
    eig.push(0.5 * (sn + disc));
    eig.push(0.5 * (sn - disc));
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// `‖uuᵀ − vvᵀ‖_F = √(‖u‖⁴ + ‖v‖⁴ − 2(uᵀv)²)`.
pub fn imbalance(s: &ScalarState) -> f64 {
    let uu = dot(&s.u, &s.u);
    let vv = dot(&s.v, &s.v);
    let uv = s.dot();
    (uu * uu + vv * vv - 2.0 * uv * uv).max(0.0).sqrt()
}

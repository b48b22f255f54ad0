//! Matrix factorization `L(U, V) = ½‖UᵀV − Y‖²_F + (λ/2)(‖U‖²_F + ‖V‖²_F)`, its
//! reduction to decoupled scalar problems, basin extraction for measure-zero sets,
//! and a deep linear chain variant.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::criticality::{critical_step_size_of, in_domain_dprime};
use crate::error::{invalid, Error, Result};
use crate::fractal::GridSpec;
use crate::linalg::{jacobi_svd, orthonormality_defect, singular_values, Svd};
use crate::scalar::{self, dot, OutcomeKind, ScalarProblem, ScalarState, StepConfig};

/// Loss definition; `y` is the `d_y × d_y` target.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixProblem {
    pub y: DMatrix<f64>,
    pub lambda: f64,
    pub d: usize,
    pub d_y: usize,
}

impl MatrixProblem {
    pub fn new(y: DMatrix<f64>, lambda: f64, d: usize) -> Result<Self> {
        let d_y = y.nrows();
        if d == 0 || d_y == 0 {
            return Err(invalid("d and d_y must be at least 1"));
        }
        if y.ncols() != d_y {
            return Err(Error::DimensionMismatch { expected: d_y, got: y.ncols() });
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(invalid(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        if y.iter().any(|x| !x.is_finite()) {
            return Err(invalid("target entries must be finite"));
        }
        Ok(Self { y, lambda, d, d_y })
    }

    pub fn diagonal(y_diag: &[f64], lambda: f64, d: usize) -> Result<Self> {
        let n = y_diag.len();
        let mut y = DMatrix::<f64>::zeros(n, n);
        for (i, &v) in y_diag.iter().enumerate() {
            y[(i, i)] = v;
        }
        Self::new(y, lambda, d)
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.d_y).all(|j| (0..self.d_y).all(|i| i == j || self.y[(i, j)] == 0.0))
    }

    pub fn y_diag(&self) -> Vec<f64> {
        (0..self.d_y).map(|i| self.y[(i, i)]).collect()
    }

    /// The scalar problem governing column `i` of a diagonal target.
    pub fn column_problem(&self, i: usize) -> Result<ScalarProblem> {
        ScalarProblem::new(self.y[(i, i)], self.lambda, self.d)
    }

    /// Sum of the scalar minima over the target's singular values (needs `d ≥ d_y`).
    pub fn global_min(&self) -> Result<f64> {
        if self.d < self.d_y {
            return Err(invalid("closed-form minimum needs d >= d_y"));
        }
        let sv = singular_values(&self.y)?;
        sv.iter().map(|&s| Ok(ScalarProblem::new(s, self.lambda, 1)?.global_min())).sum()
    }

    pub fn param_count(&self) -> usize {
        2 * self.d * self.d_y
    }

    fn check(&self, s: &MatrixState) -> Result<()> {
        for m in [&s.u, &s.v] {
            if m.nrows() != self.d {
                return Err(Error::DimensionMismatch { expected: self.d, got: m.nrows() });
            }
            if m.ncols() != self.d_y {
                return Err(Error::DimensionMismatch { expected: self.d_y, got: m.ncols() });
            }
        }
        Ok(())
    }
}

/// A parameter point `(U, V)`, both `d × d_y`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixState {
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

impl MatrixState {
    pub fn new(u: DMatrix<f64>, v: DMatrix<f64>) -> Result<Self> {
        if u.shape() != v.shape() {
            return Err(Error::DimensionMismatch { expected: u.len(), got: v.len() });
        }
        if u.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(invalid("state entries must be finite"));
        }
        Ok(Self { u, v })
    }

    pub fn zeros(d: usize, d_y: usize) -> Self {
        Self { u: DMatrix::zeros(d, d_y), v: DMatrix::zeros(d, d_y) }
    }

    /// Column pair `(uⁱ, vⁱ)` as a scalar state in `ℝᵈ`.
    pub fn column(&self, i: usize) -> ScalarState {
        ScalarState { u: self.u.column(i).iter().copied().collect(), v: self.v.column(i).iter().copied().collect() }
    }

    /// `vec U` followed by `vec V`, column-major.
    pub fn to_params(&self) -> Vec<f64> {
        self.u.iter().chain(self.v.iter()).copied().collect()
    }

    pub fn from_params(d: usize, d_y: usize, theta: &[f64]) -> Result<Self> {
        let n = d * d_y;
        if theta.len() != 2 * n {
            return Err(Error::DimensionMismatch { expected: 2 * n, got: theta.len() });
        }
        Ok(Self {
            u: DMatrix::from_column_slice(d, d_y, &theta[..n]),
            v: DMatrix::from_column_slice(d, d_y, &theta[n..]),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(self.v.iter()).all(|x| x.is_finite())
    }

    pub fn sq_norm(&self) -> f64 {
        self.u.norm_squared() + self.v.norm_squared()
    }
}

fn col(m: &DMatrix<f64>, k: usize) -> &[f64] {
    let d = m.nrows();
    &m.as_slice()[k * d..(k + 1) * d]
}

/// `UᵀV − Y`, each entry a sequential column dot product.
fn residual(p: &MatrixProblem, s: &MatrixState) -> DMatrix<f64> {
    DMatrix::from_fn(p.d_y, p.d_y, |k, l| dot(col(&s.u, k), col(&s.v, l)) - p.y[(k, l)])
}

/// `a · bᵀ` for `a: d × n`, `b: n × n`, summed in index order starting from the first term.
fn mul_transpose(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = b.nrows();
    DMatrix::from_fn(a.nrows(), n, |i, k| {
        let mut acc = a[(i, 0)] * b[(k, 0)];
        for l in 1..n {
            acc += a[(i, l)] * b[(k, l)];
        }
        acc
    })
}

fn loss_unchecked(p: &MatrixProblem, s: &MatrixState) -> f64 {
    let r = residual(p, s);
    0.5 * r.norm_squared() + 0.5 * p.lambda * s.sq_norm()
}

pub fn matrix_loss(p: &MatrixProblem, s: &MatrixState) -> Result<f64> {
    p.check(s)?;
    Ok(loss_unchecked(p, s))
}

/// `(V(UᵀV − Y)ᵀ + λU, U(UᵀV − Y) + λV)`.
pub fn matrix_gradient(p: &MatrixProblem, s: &MatrixState) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    p.check(s)?;
    let r = residual(p, s);
    let gu = mul_transpose(&s.v, &r) + &s.u * p.lambda;
    let gv = mul_transpose(&s.u, &r.transpose()) + &s.v * p.lambda;
    Ok((gu, gv))
}

fn gradient_sq_norm(p: &MatrixProblem, s: &MatrixState) -> f64 {
    let r = residual(p, s);
    let gu = mul_transpose(&s.v, &r) + &s.u * p.lambda;
    let gv = mul_transpose(&s.u, &r.transpose()) + &s.v * p.lambda;
    gu.norm_squared() + gv.norm_squared()
}

fn step_unchecked(p: &MatrixProblem, eta: f64, s: &MatrixState) -> MatrixState {
    let r = residual(p, s);
    let vr = mul_transpose(&s.v, &r);
    let ur = mul_transpose(&s.u, &r.transpose());
    let shrink = 1.0 - eta * p.lambda;
    let u = s.u.zip_map(&vr, |x, g| shrink * x - eta * g);
    let v = s.v.zip_map(&ur, |x, g| shrink * x - eta * g);
    MatrixState { u, v }
}

/// One simultaneous GD step. For `d_y = 1` this performs the same floating-point
/// operations as [`scalar::gd_step`].
pub fn matrix_gd_step(p: &MatrixProblem, eta: f64, s: &MatrixState) -> Result<MatrixState> {
    if !(eta > 0.0) {
        return Err(invalid(format!("eta must be positive, got {eta}")));
    }
    p.check(s)?;
    Ok(step_unchecked(p, eta, s))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixOutcome {
    pub kind: OutcomeKind,
    pub final_state: MatrixState,
    pub iterations: usize,
    pub final_loss: f64,
}

/// Matrix analogue of [`scalar::simulate`]. Capture by a saddle is detected through
/// the gradient norm (`‖∇L‖ ≤ saddle_tol` above the minimum level) rather than the
/// distance to the origin, so saddles where only some columns vanish are caught too.
pub fn matrix_simulate(p: &MatrixProblem, c: &StepConfig, s0: &MatrixState) -> Result<MatrixOutcome> {
    p.check(s0)?;
    c.validated()?;
    let target = p.global_min()? + c.loss_tol;
    let saddle_sq = c.saddle_tol * c.saddle_tol;
    let mut s = s0.clone();
    let mut t = 0;
    loop {
        let loss = loss_unchecked(p, &s);
        let kind = if !loss.is_finite() || !s.is_finite() {
            Some(OutcomeKind::Diverged)
        } else if loss <= target {
            Some(OutcomeKind::ConvergedMinimizer)
        } else if gradient_sq_norm(p, &s) <= saddle_sq {
            Some(OutcomeKind::ConvergedSaddle)
        } else if loss >= c.divergence_threshold {
            Some(OutcomeKind::Diverged)
        } else if t >= c.max_iters {
            Some(OutcomeKind::Undecided)
        } else {
            None
        };
        if let Some(kind) = kind {
            return Ok(MatrixOutcome { kind, final_state: s, iterations: t, final_loss: loss });
        }
        s = step_unchecked(p, c.eta, &s);
        t += 1;
    }
}

/// SVD of a square target: `y = P · diag(Σ) · Qmᵀ`. GD on `(U, V)` against `y` maps
/// to GD on `(UP, VQm)` against `diag(Σ)`.
pub fn diagonalize_target(y: &DMatrix<f64>) -> Result<Svd> {
    jacobi_svd(y)
}

/// `(U P, V Q)`.
pub fn rotate_state(s: &MatrixState, p: &DMatrix<f64>, q: &DMatrix<f64>) -> MatrixState {
    MatrixState { u: &s.u * p, v: &s.v * q }
}

/// Builds a state in the orthogonal slice from per-column scalar initial conditions.
///
/// Column `i` takes the next `dim(columns[i])` frame vectors as its basis, so the
/// column pairs occupy mutually orthogonal subspaces. `frame` must be orthonormal
/// with at least `Σ dim(columns[i])` columns.
pub fn slice_w_init(columns: &[ScalarState], frame: &DMatrix<f64>) -> Result<MatrixState> {
    let d = frame.nrows();
    let d_y = columns.len();
    if d_y == 0 {
        return Err(invalid("need at least one column"));
    }
    if d < d_y {
        return Err(invalid(format!("slice needs d >= d_y, got d = {d}, d_y = {d_y}")));
    }
    let need: usize = columns.iter().map(|c| c.dim()).sum();
    if need > frame.ncols() {
        return Err(Error::DimensionMismatch { expected: need, got: frame.ncols() });
    }
    let defect = orthonormality_defect(frame);
    if defect > 1e-10 {
        return Err(Error::Degenerate(format!("frame is not orthonormal (defect {defect:.3e})")));
    }
    let mut u = DMatrix::<f64>::zeros(d, d_y);
    let mut v = DMatrix::<f64>::zeros(d, d_y);
    let mut off = 0;
    for (i, c) in columns.iter().enumerate() {
        for k in 0..c.dim() {
            let e = frame.column(off + k);
            for r in 0..d {
                u[(r, i)] += c.u[k] * e[r];
                v[(r, i)] += c.v[k] * e[r];
            }
        }
        off += c.dim();
    }
    MatrixState::new(u, v)
}

/// Largest cross-column inner product `|⟨aⁱ, bʲ⟩|`, `i ≠ j`, over `a, b ∈ {u, v}`.
pub fn w_membership(s: &MatrixState) -> f64 {
    let n = s.u.ncols();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (ui, vi, uj, vj) = (col(&s.u, i), col(&s.v, i), col(&s.u, j), col(&s.v, j));
            worst = worst.max(dot(ui, uj).abs()).max(dot(ui, vj).abs()).max(dot(vi, vj).abs());
        }
    }
    worst
}

fn require_diagonal(p: &MatrixProblem) -> Result<()> {
    if !p.is_diagonal() {
        return Err(invalid("operation needs a diagonal target; see diagonalize_target"));
    }
    Ok(())
}

/// Runs matrix GD and, alongside, one scalar GD per column from the matching pair;
/// returns the largest entrywise gap over all steps and columns.
///
/// Outside the slice the columns interact, and the gap is a measure of that.
pub fn decoupling_check(p: &MatrixProblem, eta: f64, s0: &MatrixState, steps: usize) -> Result<f64> {
    require_diagonal(p)?;
    p.check(s0)?;
    if !(eta > 0.0) {
        return Err(invalid(format!("eta must be positive, got {eta}")));
    }
    let probs: Vec<ScalarProblem> = (0..p.d_y).map(|i| p.column_problem(i)).collect::<Result<_>>()?;
    let mut cols: Vec<ScalarState> = (0..p.d_y).map(|i| s0.column(i)).collect();
    let mut s = s0.clone();
    let mut worst: f64 = 0.0;
    for _ in 0..steps {
        s = step_unchecked(p, eta, &s);
        for (i, c) in cols.iter_mut().enumerate() {
            scalar::gd_step_in_place(&probs[i], eta, c);
            for (a, b) in col(&s.u, i).iter().zip(&c.u).chain(col(&s.v, i).iter().zip(&c.v)) {
                let gap = (a - b).abs();
                worst = if gap.is_nan() { f64::NAN } else { worst.max(gap) };
            }
        }
    }
    Ok(worst)
}

/// Minimum over columns of the scalar critical step size (unregularized, diagonal target).
pub fn matrix_critical_step_size(p: &MatrixProblem, s: &MatrixState) -> Result<f64> {
    require_diagonal(p)?;
    p.check(s)?;
    if p.lambda != 0.0 {
        return Err(invalid("critical step size formula needs lambda = 0"));
    }
    Ok((0..p.d_y).map(|i| critical_step_size_of(p.y[(i, i)], &s.column(i))).fold(f64::INFINITY, f64::min))
}

/// Bisects for the step size at which [`matrix_simulate`] stops converging.
pub fn bisect_matrix_critical_eta(
    p: &MatrixProblem,
    s0: &MatrixState,
    mut lo: f64,
    mut hi: f64,
    max_iters: usize,
    rel_tol: f64,
) -> Result<f64> {
    let converges = |eta: f64| -> Result<bool> {
        // column losses add up, and so do their bounds
        let bound: f64 = p.y_diag().iter().map(|&y| crate::criticality::dprime_loss_bound(y, eta)).sum();
        let c = StepConfig::new(eta, max_iters)?
            .with_divergence_threshold((2.0 * bound).max(StepConfig::DEFAULT_DIVERGENCE))?;
        Ok(matrix_simulate(p, &c, s0)?.kind == OutcomeKind::ConvergedMinimizer)
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

/// Analytic Hessian of the matrix loss in the [`MatrixState::to_params`] layout.
pub fn matrix_hessian(p: &MatrixProblem, s: &MatrixState) -> Result<DMatrix<f64>> {
    p.check(s)?;
    let (d, k) = (p.d, p.d_y);
    let n = d * k;
    let r = residual(p, s);
    let vvt = &s.v * s.v.transpose();
    let uut = &s.u * s.u.transpose();
    let mut h = DMatrix::<f64>::zeros(2 * n, 2 * n);
    let ui = |i: usize, a: usize| a * d + i;
    let vi = |i: usize, b: usize| n + b * d + i;
    for a in 0..k {
        for i in 0..d {
            for j in 0..d {
                h[(ui(i, a), ui(j, a))] += vvt[(i, j)];
                h[(vi(i, a), vi(j, a))] += uut[(i, j)];
            }
            h[(ui(i, a), ui(i, a))] += p.lambda;
            h[(vi(i, a), vi(i, a))] += p.lambda;
        }
    }
    for a in 0..k {
        for b in 0..k {
            for i in 0..d {
                for j in 0..d {
                    let mut x = s.u[(j, a)] * s.v[(i, b)];
                    if i == j {
                        x += r[(a, b)];
                    }
                    h[(ui(i, a), vi(j, b))] = x;
                    h[(vi(j, b), ui(i, a))] = x;
                }
            }
        }
    }
    Ok(h)
}

/// `det(I − ηH)`, the Jacobian determinant of the GD map; it vanishes where the
/// Hessian has an eigenvalue `1/η`.
pub fn gd_jacobian_det(p: &MatrixProblem, eta: f64, s: &MatrixState) -> Result<f64> {
    if p.param_count() > 1000 {
        return Err(invalid("dense Jacobian limited to 1000 parameters"));
    }
    let h = matrix_hessian(p, s)?;
    let n = h.nrows();
    let j = DMatrix::<f64>::identity(n, n) - h * eta;
    Ok(j.determinant())
}

// -- basin extraction -------------------------------------------------------------

#[derive(Clone, Copy)]
struct Cell {
    field: f64,
    ok: bool,
}

fn field_raster<F>(spec: &GridSpec, f: F) -> Vec<Cell>
where
    F: Fn(f64, f64) -> Cell + Sync,
{
    let mut cells = vec![Cell { field: 0.0, ok: false }; spec.len()];
    cells.par_chunks_mut(spec.nx.max(1)).enumerate().for_each(|(j, row)| {
        for (i, c) in row.iter_mut().enumerate() {
            let (x, y) = spec.center(i, j);
            *c = f(x, y);
        }
    });
    cells
}

/// Zero crossings of a cell-centred field between horizontally and vertically
/// adjacent valid cells, located by linear interpolation.
fn zero_crossings(spec: &GridSpec, cells: &[Cell]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let (nx, ny) = (spec.nx, spec.ny);
    for j in 0..ny {
        for i in 0..nx {
            let a = cells[j * nx + i];
            if !a.ok {
                continue;
            }
            let pa = spec.center(i, j);
            if a.field == 0.0 {
                out.push(pa);
                continue;
            }
            for (di, dj) in [(1, 0), (0, 1)] {
                let (i2, j2) = (i + di, j + dj);
                if i2 >= nx || j2 >= ny {
                    continue;
                }
                let b = cells[j2 * nx + i2];
                if !b.ok || b.field == 0.0 || (a.field > 0.0) == (b.field > 0.0) {
                    continue;
                }
                let t = a.field / (a.field - b.field);
                let pb = spec.center(i2, j2);
                out.push((pa.0 + t * (pb.0 - pa.0), pa.1 + t * (pb.1 - pa.1)));
            }
        }
    }
    out
}

fn run(p: &ScalarProblem, eta: f64, u: f64, v: f64, n: usize) -> ScalarState {
    let mut s = ScalarState::scalar(u, v);
    for _ in 0..n {
        scalar::gd_step_in_place(p, eta, &mut s);
        if !s.is_finite() {
            break;
        }
    }
    s
}

fn require_scalar_plane(p: &ScalarProblem, eta: f64) -> Result<()> {
    if p.d != 1 {
        return Err(invalid("basin extraction works on the d = 1 plane"));
    }
    if !(eta > 0.0) {
        return Err(invalid(format!("eta must be positive, got {eta}")));
    }
    Ok(())
}

/// Loss gap above the minimum below which a trajectory counts as converged when
/// masking the basin rasters.
pub const BASIN_LOSS_TOL: f64 = 1e-6;

/// `(u_n + sgn(y)v_n)/√2`, the signed distance to `{u = −sgn(y)v}` after `n` steps.
pub fn saddle_field(p: &ScalarProblem, eta: f64, u: f64, v: f64, n: usize) -> f64 {
    let sg = if p.y >= 0.0 { 1.0 } else { -1.0 };
    let s = run(p, eta, u, v, n);
    (s.u[0] + sg * s.v[0]) * std::f64::consts::FRAC_1_SQRT_2
}

/// Points of the `(u, v)` plane whose trajectories lie on `{u = −sgn(y)v}` after
/// `n_steps`: the stable set of the saddle.
///
/// For `λ = 0` crossings are kept when they lie in the smooth convergence region;
/// for `λ > 0` both adjacent cells must converge to a minimizer.
pub fn saddle_basin_points(p: &ScalarProblem, eta: f64, spec: &GridSpec, n_steps: usize) -> Result<Vec<(f64, f64)>> {
    require_scalar_plane(p, eta)?;
    let sg = if p.y >= 0.0 { 1.0 } else { -1.0 };
    let min = p.global_min();
    let regularized = p.lambda > 0.0;
    let cells = field_raster(spec, |u, v| {
        let s = run(p, eta, u, v, n_steps);
        let field = (s.u[0] + sg * s.v[0]) * std::f64::consts::FRAC_1_SQRT_2;
        let ok = if regularized {
            let r = s.u[0] * s.v[0] - p.y;
            let loss = 0.5 * r * r + 0.5 * p.lambda * s.sq_norm();
            loss.is_finite() && loss <= min + BASIN_LOSS_TOL
        } else {
            field.is_finite()
        };
        Cell { field, ok }
    });
    let pts = zero_crossings(spec, &cells);
    Ok(if regularized {
        pts
    } else {
        pts.into_iter().filter(|&(u, v)| in_domain_dprime(p.y, eta, &ScalarState::scalar(u, v))).collect()
    })
}

/// Points whose trajectories sit on the minimizer set `{uv = y}` after `n_steps`
/// at a minimizer with `u² + v² ≥ 2/η`, i.e. the finite-time basin of the unstable
/// minimizers. Needs `λ = 0`.
pub fn unstable_basin_points(p: &ScalarProblem, eta: f64, spec: &GridSpec, n_steps: usize) -> Result<Vec<(f64, f64)>> {
    require_scalar_plane(p, eta)?;
    if p.lambda != 0.0 {
        return Err(invalid("unstable basins are extracted for lambda = 0"));
    }
    let cells = field_raster(spec, |u, v| {
        let s = run(p, eta, u, v, n_steps);
        let field = s.u[0] * s.v[0] - p.y;
        let ok = field.is_finite() && 0.5 * field * field < StepConfig::DEFAULT_DIVERGENCE;
        Cell { field, ok }
    });
    let threshold = 2.0 / eta;
    Ok(zero_crossings(spec, &cells)
        .into_iter()
        .filter(|&(u, v)| run(p, eta, u, v, n_steps).sq_norm() >= threshold)
        .collect())
}

/// Fraction of grid cells containing at least one of `points`.
pub fn occupied_fraction(points: &[(f64, f64)], spec: &GridSpec) -> f64 {
    if spec.is_empty() {
        return 0.0;
    }
    let mut hit = vec![false; spec.len()];
    for &(x, y) in points {
        let i = ((x - spec.x_min) / spec.dx()).floor();
        let j = ((y - spec.y_min) / spec.dy()).floor();
        if i >= 0.0 && j >= 0.0 && (i as usize) < spec.nx && (j as usize) < spec.ny {
            hit[j as usize * spec.nx + i as usize] = true;
        }
    }
    hit.iter().filter(|&&h| h).count() as f64 / spec.len() as f64
}

// -- deep chains ------------------------------------------------------------------

fn check_chain(factors: &[DMatrix<f64>], y: &DMatrix<f64>) -> Result<()> {
    if factors.is_empty() {
        return Err(invalid("chain needs at least one factor"));
    }
    for w in factors.windows(2) {
        if w[0].ncols() != w[1].nrows() {
            return Err(Error::DimensionMismatch { expected: w[0].ncols(), got: w[1].nrows() });
        }
    }
    let (r, c) = (factors[0].nrows(), factors[factors.len() - 1].ncols());
    if y.nrows() != r {
        return Err(Error::DimensionMismatch { expected: r, got: y.nrows() });
    }
    if y.ncols() != c {
        return Err(Error::DimensionMismatch { expected: c, got: y.ncols() });
    }
    Ok(())
}

/// `prefix[i] = W₀⋯W_{i−1}` and `suffix[i] = W_i⋯W_{k−1}` (identity when empty).
fn partial_products(factors: &[DMatrix<f64>]) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
    let k = factors.len();
    let rows = factors[0].nrows();
    let cols = factors[k - 1].ncols();
    let mut prefix = vec![DMatrix::identity(rows, rows)];
    for f in factors {
        let next = prefix.last().unwrap() * f;
        prefix.push(next);
    }
    let mut suffix = vec![DMatrix::identity(cols, cols)];
    for f in factors.iter().rev() {
        let next = f * suffix.last().unwrap();
        suffix.push(next);
    }
    suffix.reverse();
    (prefix, suffix)
}

/// `½‖W₀⋯W_{k−1} − Y‖²_F + (λ/2)Σ‖W_i‖²_F`.
pub fn deep_loss(factors: &[DMatrix<f64>], y: &DMatrix<f64>, lambda: f64) -> Result<f64> {
    check_chain(factors, y)?;
    let prod = factors[1..].iter().fold(factors[0].clone(), |acc, f| acc * f);
    let reg: f64 = factors.iter().map(|f| f.norm_squared()).sum();
    Ok(0.5 * (prod - y).norm_squared() + 0.5 * lambda * reg)
}

/// `∇_{W_i} = (W₀⋯W_{i−1})ᵀ R (W_{i+1}⋯W_{k−1})ᵀ + λW_i` with `R` the product residual.
pub fn deep_gradient(factors: &[DMatrix<f64>], y: &DMatrix<f64>, lambda: f64) -> Result<Vec<DMatrix<f64>>> {
    check_chain(factors, y)?;
    let (prefix, suffix) = partial_products(factors);
    let r = &prefix[factors.len()] - y;
    Ok(factors
        .iter()
        .enumerate()
        .map(|(i, w)| prefix[i].transpose() * &r * suffix[i + 1].transpose() + w * lambda)
        .collect())
}

/// One simultaneous GD step on every factor of the chain.
pub fn deep_gd_step(factors: &[DMatrix<f64>], y: &DMatrix<f64>, eta: f64, lambda: f64) -> Result<Vec<DMatrix<f64>>> {
    if !(eta > 0.0) {
        return Err(invalid(format!("eta must be positive, got {eta}")));
    }
    let g = deep_gradient(factors, y, lambda)?;
    Ok(factors.iter().zip(g).map(|(w, g)| w - g * eta).collect())
}

/// Minimum over `t ≥ 0` of `½(tᵏ − σ)² + (kλ/2)t²`, the contribution of one
/// singular value `σ ≥ 0` to the minimum of a depth-`k` regularized chain whose
/// factors are balanced at the optimum.
pub fn deep_singular_min(sigma: f64, lambda: f64, depth: usize) -> f64 {
    let k = depth as i32;
    let kf = depth as f64;
    let obj = |t: f64| 0.5 * (t.powi(k) - sigma).powi(2) + 0.5 * kf * lambda * t * t;
    let hi = sigma.abs().powf(1.0 / kf).max(1.0) * 1.5;
    let n = 4000;
    let mut best = (0.0, obj(0.0));
    for i in 1..=n {
        let t = hi * i as f64 / n as f64;
        let f = obj(t);
        if f < best.1 {
            best = (t, f);
        }
    }
    // golden-section refinement around the best grid point
    let h = hi / n as f64;
    let (mut a, mut b) = ((best.0 - h).max(0.0), best.0 + h);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if obj(c) < obj(d) {
            b = d;
        } else {
            a = c;
        }
    }
    obj(0.5 * (a + b)).min(best.1)
}

/// Global minimum of the regularized chain loss from the target's singular values.
pub fn deep_global_min(y: &DMatrix<f64>, lambda: f64, depth: usize) -> Result<f64> {
    if lambda == 0.0 {
        return Ok(0.0);
    }
    Ok(singular_values(y)?.iter().map(|&s| deep_singular_min(s, lambda, depth)).sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeepOutcome {
    pub kind: OutcomeKind,
    pub iterations: usize,
    pub final_loss: f64,
    pub final_sq_norm: f64,
    pub final_factors: Vec<DMatrix<f64>>,
}

/// Runs chain GD until the loss is within `c.loss_tol` of `min_loss`, blows past
/// `c.divergence_threshold`, the gradient norm drops to `c.saddle_tol` above that
/// level (a saddle), or `c.max_iters` is reached.
pub fn deep_simulate(
    factors: &[DMatrix<f64>],
    y: &DMatrix<f64>,
    lambda: f64,
    min_loss: f64,
    c: &StepConfig,
) -> Result<DeepOutcome> {
    check_chain(factors, y)?;
    c.validated()?;
    let k = factors.len();
    let saddle_sq = c.saddle_tol * c.saddle_tol;
    let mut w = factors.to_vec();
    let mut t = 0;
    loop {
        let (prefix, suffix) = partial_products(&w);
        let r = &prefix[k] - y;
        let reg: f64 = w.iter().map(|f| f.norm_squared()).sum();
        let loss = 0.5 * r.norm_squared() + 0.5 * lambda * reg;
        let kind = if !loss.is_finite() || loss >= c.divergence_threshold {
            Some(OutcomeKind::Diverged)
        } else if loss <= min_loss + c.loss_tol {
            Some(OutcomeKind::ConvergedMinimizer)
        } else if t >= c.max_iters {
            Some(OutcomeKind::Undecided)
        } else {
            None
        };
        if let Some(kind) = kind {
            return Ok(DeepOutcome { kind, iterations: t, final_loss: loss, final_sq_norm: reg, final_factors: w });
        }
        let grads: Vec<DMatrix<f64>> =
            (0..k).map(|i| prefix[i].transpose() * &r * suffix[i + 1].transpose() + &w[i] * lambda).collect();
        if grads.iter().map(|g| g.norm_squared()).sum::<f64>() <= saddle_sq {
            return Ok(DeepOutcome {
                kind: OutcomeKind::ConvergedSaddle,
                iterations: t,
                final_loss: loss,
                final_sq_norm: reg,
                final_factors: w,
            });
        }
        for (f, g) in w.iter_mut().zip(&grads) {
            *f -= g * c.eta;
        }
        t += 1;
    }
}

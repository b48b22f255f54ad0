//! Small dense helpers: two-sided Jacobi SVD and seeded orthonormal frames.

use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{invalid, Error, Result};

pub const JACOBI_MAX_SWEEPS: usize = 100;
pub const JACOBI_TOL: f64 = 1e-13;

/// Singular value decomposition `a = p · diag(sigma) · qᵀ` of a square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Svd {
    pub p: DMatrix<f64>,
    /// Non-negative, sorted descending.
    pub sigma: Vec<f64>,
    pub q: DMatrix<f64>,
}

impl Svd {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.p * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.sigma.clone())) * self.q.transpose()
    }
}

fn off_diagonal_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for j in 0..n {
        for i in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

fn rotate_rows(a: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    // rows (p, q) <- [[c, s], [-s, c]] · rows (p, q)
    for j in 0..a.ncols() {
        let (x, y) = (a[(p, j)], a[(q, j)]);
        a[(p, j)] = c * x + s * y;
        a[(q, j)] = -s * x + c * y;
    }
}

fn rotate_cols(a: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    // cols (p, q) <- cols (p, q) · [[c, s], [-s, c]]
    for i in 0..a.nrows() {
        let (x, y) = (a[(i, p)], a[(i, q)]);
        a[(i, p)] = c * x - s * y;
        a[(i, q)] = s * x + c * y;
    }
}

/// Two-sided Jacobi SVD of a square matrix.
///
/// Each pivot pair is first symmetrized by a left rotation, then diagonalized by a
/// symmetric Jacobi rotation applied on both sides. Stops once the off-diagonal
/// Frobenius norm falls below `JACOBI_TOL · max(1, ‖a‖_F)`.
pub fn jacobi_svd(a: &DMatrix<f64>) -> Result<Svd> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: a.ncols() });
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(invalid("matrix entries must be finite"));
    }
    let mut m = a.clone();
    let mut left = DMatrix::<f64>::identity(n, n);
    let mut right = DMatrix::<f64>::identity(n, n);
    let tol = JACOBI_TOL * a.norm().max(1.0);
    let mut sweeps = 0;
    while off_diagonal_norm(&m) > tol {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::NoConvergence { what: "jacobi svd".into(), iterations: sweeps });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let (w, x, y, z) = (m[(p, p)], m[(p, q)], m[(q, p)], m[(q, q)]);
                if x == 0.0 && y == 0.0 {
                    continue;
                }
                let phi = (y - x).atan2(w + z);
                let (c0, s0) = (phi.cos(), phi.sin());
                rotate_rows(&mut m, p, q, c0, s0);
                rotate_cols(&mut left, p, q, c0, -s0);
                let (e, f, g) = (m[(p, p)], m[(p, q)], m[(q, q)]);
                if f != 0.0 {
                    let tau = (g - e) / (2.0 * f);
                    let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                    let c1 = 1.0 / (1.0 + t * t).sqrt();
                    let s1 = t * c1;
                    // m <- Jᵀ m J with J = [[c1, s1], [-s1, c1]]
                    rotate_rows(&mut m, p, q, c1, -s1);
                    rotate_cols(&mut m, p, q, c1, s1);
                    rotate_cols(&mut left, p, q, c1, s1);
                    rotate_cols(&mut right, p, q, c1, s1);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    order.sort_by(|&i, &j| diag[j].abs().total_cmp(&diag[i].abs()));
    let mut p = DMatrix::<f64>::zeros(n, n);
    let mut q = DMatrix::<f64>::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    for (k, &i) in order.iter().enumerate() {
        let sign = if diag[i] < 0.0 { -1.0 } else { 1.0 };
        sigma.push(diag[i].abs());
        p.set_column(k, &(left.column(i) * sign));
        q.set_column(k, &right.column(i));
    }
    Ok(Svd { p, sigma, q })
}

/// Singular values of any dense matrix, via zero-padding to a square.
pub fn singular_values(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = a.nrows().max(a.ncols());
    let mut sq = DMatrix::<f64>::zeros(n, n);
    sq.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    let mut s = jacobi_svd(&sq)?.sigma;
    s.truncate(a.nrows().min(a.ncols()));
    Ok(s)
}

/// First `k` columns of the `d × d` identity.
pub fn identity_frame(d: usize, k: usize) -> Result<DMatrix<f64>> {
    if k > d {
        return Err(Error::Degenerate(format!("cannot fit {k} orthonormal columns in dimension {d}")));
    }
    Ok(DMatrix::<f64>::identity(d, k))
}

/// `d × k` orthonormal frame from Gram–Schmidt on a seeded uniform `[-1, 1]` matrix.
///
/// The generator is xoshiro256++ seeded through SplitMix64, so frames are identical
/// across platforms for a given seed.
pub fn random_frame(d: usize, k: usize, seed: u64) -> Result<DMatrix<f64>> {
    if k > d {
        return Err(Error::Degenerate(format!("cannot fit {k} orthonormal columns in dimension {d}")));
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let raw = DMatrix::<f64>::from_fn(d, k, |_, _| rng.random_range(-1.0..1.0));
    gram_schmidt(&raw)
}

/// Modified Gram–Schmidt with one re-orthogonalization pass.
pub fn gram_schmidt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut q = a.clone();
    for j in 0..q.ncols() {
        for _ in 0..2 {
            for i in 0..j {
                let r = q.column(i).dot(&q.column(j));
                let ci = q.column(i).clone_owned();
                q.column_mut(j).axpy(-r, &ci, 1.0);
            }
        }
        let norm = q.column(j).norm();
        if norm < 1e-10 {
            return Err(Error::Degenerate(format!("frame is rank deficient at column {j}")));
        }
        q.column_mut(j).scale_mut(1.0 / norm);
    }
    Ok(q)
}

/// `max |FᵀF − I|` over all entries.
pub fn orthonormality_defect(f: &DMatrix<f64>) -> f64 {
    let g = f.transpose() * f;
    let n = g.nrows();
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for i in 0..n {
            let want = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - want).abs());
        }
    }
    worst
}

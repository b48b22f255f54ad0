//! Real polynomial roots via companion-matrix eigenvalues.

use nalgebra::DMatrix;

/// Evaluates `Σ c[k] zᵏ` and its derivative (coefficients lowest degree first).
pub fn eval_with_derivative(c: &[f64], z: f64) -> (f64, f64) {
    let mut p = 0.0;
    let mut dp = 0.0;
    for &a in c.iter().rev() {
        dp = dp * z + p;
        p = p * z + a;
    }
    (p, dp)
}

/// Approximately real roots of a polynomial with coefficients lowest degree first.
///
/// Eigenvalues of the companion matrix whose imaginary part is below `imag_tol`
/// (relative to `1 + |re|`) are kept and refined by `polish` Newton steps. Clustered
/// double roots split into complex pairs of size ~√ε, so callers should pick a loose
/// `imag_tol` and verify candidates against their own equations.
pub fn real_roots(c: &[f64], imag_tol: f64, polish: usize) -> Vec<f64> {
    let mut c = c.to_vec();
    while c.len() > 1 && c.last() == Some(&0.0) {
        c.pop();
    }
    let n = c.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let lead = c[n];
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        m[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        m[(i, n - 1)] = -c[i] / lead;
    }
    let mut roots: Vec<f64> = m
        .complex_eigenvalues()
        .iter()
        .filter(|e| e.im.abs() <= imag_tol * (1.0 + e.re.abs()))
        .map(|e| {
            let mut z = e.re;
            for _ in 0..polish {
                let (p, dp) = eval_with_derivative(&c, z);
                if dp == 0.0 || !dp.is_finite() {
                    break;
                }
                let step = p / dp;
                if !step.is_finite() {
                    break;
                }
                z -= step;
            }
            z
        })
        .collect();
    roots.sort_by(f64::total_cmp);
    roots
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_with_known_roots() {
        // (z − 1)(z + 2)(z − 3) = z³ − 2z² − 5z + 6
        let r = real_roots(&[6.0, -5.0, -2.0, 1.0], 1e-8, 2);
        let want = [-2.0, 1.0, 3.0];
        assert_eq!(r.len(), 3);
        for (a, b) in r.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn complex_pair_is_dropped() {
        // (z² + 1)(z − 0.5)
        let r = real_roots(&[-0.5, 1.0, -0.5, 1.0], 1e-8, 2);
        assert_eq!(r.len(), 1);
        assert!((r[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn horner_derivative() {
        let (p, dp) = eval_with_derivative(&[1.0, 2.0, 3.0], 2.0);
        assert_eq!(p, 17.0);
        assert_eq!(dp, 14.0);
    }
}

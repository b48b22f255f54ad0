//! Dynamics on the invariant boundary of the convergence region.
//!
//! On the boundary line the quotient map reduces to `z ↦ z³ − 3z` on `[−2, 2]`. It is
//! conjugate to the Chebyshev map `4x³ − 3x` via `x = z/2`, and to the slope-3
//! piecewise-linear map via `z = 2 sin(πx/2)`. Periodic orbits and lap counts are
//! computed exactly on the piecewise-linear side.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Default cap on the period for piece enumeration (3¹² pieces).
pub const MAX_PERIOD: usize = 12;

const DOMAIN_SLACK: f64 = 1e-12;

/// Tolerance used when comparing orbit points.
pub const ORBIT_TOL: f64 = 1e-9;

fn check_interval(x: f64, half_width: f64, what: &str) -> Result<()> {
    if x.is_finite() && x.abs() <= half_width + DOMAIN_SLACK {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} argument {x} outside [-{half_width}, {half_width}]")))
    }
}

/// `z³ − 3z` on `[−2, 2]`.
pub fn cubic_map(z: f64) -> Result<f64> {
    check_interval(z, 2.0, "cubic map")?;
    Ok(z * z * z - 3.0 * z)
}

/// `4x³ − 3x` on `[−1, 1]`.
pub fn chebyshev_map(x: f64) -> Result<f64> {
    check_interval(x, 1.0, "Chebyshev map")?;
    Ok(4.0 * x * x * x - 3.0 * x)
}

/// Boundary coordinate to Chebyshev coordinate, `x = z/2`.
pub fn boundary_to_chebyshev(z: f64) -> Result<f64> {
    check_interval(z, 2.0, "boundary coordinate")?;
    Ok(z / 2.0)
}

/// Piecewise-linear coordinate to boundary coordinate, `z = 2 sin(πx/2)`.
pub fn conjugacy_to_pl(x: f64) -> Result<f64> {
    check_interval(x, 1.0, "piecewise-linear coordinate")?;
    Ok(2.0 * (PI * x / 2.0).sin())
}

/// Boundary coordinate to piecewise-linear coordinate, `x = (2/π) asin(z/2)`.
pub fn conjugacy_from_pl(z: f64) -> Result<f64> {
    check_interval(z, 2.0, "boundary coordinate")?;
    Ok(2.0 / PI * (z / 2.0).clamp(-1.0, 1.0).asin())
}

/// `3x + 2` on `[−1, −⅓]`, `−3x` on `(−⅓, ⅓)`, `3x − 2` on `[⅓, 1]`.
pub fn pl_map(x: f64) -> Result<f64> {
    check_interval(x, 1.0, "piecewise-linear map")?;
    Ok(pl_unchecked(x))
}

fn pl_unchecked(x: f64) -> f64 {
    if x <= -1.0 / 3.0 {
        3.0 * x + 2.0
    } else if x < 1.0 / 3.0 {
        -3.0 * x
    } else {
        3.0 * x - 2.0
    }
}

/// A branch of the `n`-fold composition: on `[a, b]` the map is `x ↦ m·x + c`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Piece {
    a: f64,
    b: f64,
    m: f64,
    c: f64,
}

/// Slope and intercept of the piecewise-linear map on each of its three intervals.
const PL_BRANCHES: [(f64, f64, f64, f64); 3] =
    [(-1.0, -1.0 / 3.0, 3.0, 2.0), (-1.0 / 3.0, 1.0 / 3.0, -3.0, 0.0), (1.0 / 3.0, 1.0, 3.0, -2.0)];

/// All affine pieces of the `n`-fold composition, ordered left to right.
fn composed_pieces(n: usize) -> Vec<Piece> {
    let mut pieces = vec![Piece { a: -1.0, b: 1.0, m: 1.0, c: 0.0 }];
    for _ in 0..n {
        let mut next = Vec::with_capacity(pieces.len() * 3);
        for p in &pieces {
            // g = m x + c maps [a, b] onto [−1, 1]; pull back each branch interval
            let mut sub: Vec<Piece> = PL_BRANCHES
                .iter()
                .map(|&(lo, hi, s, t)| {
                    let x0 = (lo - p.c) / p.m;
                    let x1 = (hi - p.c) / p.m;
                    Piece { a: x0.min(x1), b: x0.max(x1), m: s * p.m, c: s * p.c + t }
                })
                .collect();
            if p.m < 0.0 {
                sub.reverse();
            }
            next.extend(sub);
        }
        pieces = next;
    }
    pieces
}

fn check_period(n: usize, cap: usize) -> Result<()> {
    if n == 0 {
        return Err(invalid("period must be at least 1"));
    }
    if n > cap {
        return Err(invalid(format!("period {n} exceeds the enumeration cap {cap}")));
    }
    Ok(())
}

/// Every solution of `pl_mapⁿ(x) = x`, sorted, one per affine piece.
pub fn pl_periodic_points(n: usize) -> Result<Vec<f64>> {
    pl_periodic_points_capped(n, MAX_PERIOD)
}

pub fn pl_periodic_points_capped(n: usize, cap: usize) -> Result<Vec<f64>> {
    check_period(n, cap)?;
    let mut pts: Vec<f64> = composed_pieces(n)
        .iter()
        .filter_map(|p| {
            let x = p.c / (1.0 - p.m);
            let slack = 1e-12;
            (x >= p.a - slack && x <= p.b + slack).then_some(x.clamp(-1.0, 1.0))
        })
        .collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-13);
    Ok(pts)
}

/// A periodic orbit of the boundary cubic map, listed in orbit order starting
/// from its smallest point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryOrbit {
    pub period: usize,
    pub points: Vec<f64>,
    pub prime: bool,
}

impl BoundaryOrbit {
    /// Largest `|cubic(pᵢ) − pᵢ₊₁|` around the cycle.
    pub fn cyclic_residual(&self) -> f64 {
        let n = self.points.len();
        (0..n)
            .map(|i| {
                let z = self.points[i];
                (z * z * z - 3.0 * z - self.points[(i + 1) % n]).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn contains(&self, z: f64, tol: f64) -> bool {
        self.points.iter().any(|p| (p - z).abs() <= tol)
    }
}

/// All prime-period-`n` orbits of the boundary cubic map.
pub fn periodic_orbits(n: usize) -> Result<Vec<BoundaryOrbit>> {
    periodic_orbits_capped(n, MAX_PERIOD)
}

pub fn periodic_orbits_capped(n: usize, cap: usize) -> Result<Vec<BoundaryOrbit>> {
    let pts = pl_periodic_points_capped(n, cap)?;
    let find = |x: f64| -> Option<usize> {
        let i = pts.partition_point(|p| *p < x - ORBIT_TOL);
        (i < pts.len() && (pts[i] - x).abs() <= ORBIT_TOL).then_some(i)
    };
    let mut seen = vec![false; pts.len()];
    let mut orbits = Vec::new();
    for start in 0..pts.len() {
        if seen[start] {
            continue;
        }
        let mut idx = vec![start];
        let mut x = pts[start];
        let mut ok = true;
        for _ in 1..n {
            // snap each iterate back onto the exact solution list to stop error growth
            match find(pl_unchecked(x)) {
                Some(j) => {
                    idx.push(j);
                    x = pts[j];
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        for &j in &idx {
            seen[j] = true;
        }
        if !ok {
            continue;
        }
        let mut distinct = idx.clone();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() != n {
            continue;
        }
        // starts are visited in ascending order, so each orbit starts at its minimum
        let points = idx.iter().map(|&j| 2.0 * (PI * pts[j] / 2.0).sin()).collect();
        orbits.push(BoundaryOrbit { period: n, points, prime: true });
    }
    Ok(orbits)
}

/// `(laps, log(laps)/n)` for the `n`-fold piecewise-linear map, counting maximal
/// monotone pieces.
pub fn lap_entropy(n: usize) -> Result<(u64, f64)> {
    lap_entropy_capped(n, MAX_PERIOD)
}

pub fn lap_entropy_capped(n: usize, cap: usize) -> Result<(u64, f64)> {
    check_period(n, cap)?;
    let pieces = composed_pieces(n);
    let mut laps = 1u64;
    for w in pieces.windows(2) {
        if (w[0].m > 0.0) != (w[1].m > 0.0) {
            laps += 1;
        }
    }
    Ok((laps, (laps as f64).ln() / n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_examples() {
        assert_eq!(cubic_map(-2.0).unwrap(), -2.0);
        assert_eq!(cubic_map(0.0).unwrap(), 0.0);
        assert!(cubic_map(3f64.sqrt()).unwrap().abs() < 1e-15);
        assert!(cubic_map(2.5).is_err());
    }

    #[test]
    fn conjugacy_examples() {
        assert_eq!(conjugacy_to_pl(1.0).unwrap(), 2.0);
        let z = conjugacy_to_pl(-5.0 / 7.0).unwrap();
        assert!((z - 2.0 * (-5.0 * PI / 14.0).sin()).abs() < 1e-15);
        assert!((z + 1.8019).abs() < 1e-4);
        for k in 0..=200 {
            let x = -1.0 + k as f64 / 100.0;
            assert!((conjugacy_from_pl(conjugacy_to_pl(x).unwrap()).unwrap() - x).abs() < 1e-14 * 10.0);
        }
        assert!(conjugacy_to_pl(1.5).is_err());
    }

    #[test]
    fn li_yorke_cycle() {
        let x = -5.0 / 7.0;
        let a = pl_map(x).unwrap();
        let b = pl_map(a).unwrap();
        let c = pl_map(b).unwrap();
        assert!((a + 1.0 / 7.0).abs() < 1e-15);
        assert!((b - 3.0 / 7.0).abs() < 1e-15);
        assert!((c - x).abs() < 1e-15);
        assert_eq!(pl_map(0.0).unwrap(), 0.0);
    }

    #[test]
    fn semiconjugacies() {
        for k in 0..=1000 {
            let x = -1.0 + 2.0 * k as f64 / 1000.0;
            let lhs = cubic_map(conjugacy_to_pl(x).unwrap()).unwrap();
            let rhs = conjugacy_to_pl(pl_map(x).unwrap()).unwrap();
            assert!((lhs - rhs).abs() < 1e-12, "x = {x}");
            let z = 2.0 * x;
            let lhs = boundary_to_chebyshev(cubic_map(z).unwrap()).unwrap();
            let rhs = chebyshev_map(boundary_to_chebyshev(z).unwrap()).unwrap();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn fixed_points() {
        let orbits = periodic_orbits(1).unwrap();
        let mut z: Vec<f64> = orbits.iter().map(|o| o.points[0]).collect();
        z.sort_by(f64::total_cmp);
        assert_eq!(z.len(), 3);
        for (a, b) in z.iter().zip([-2.0, 0.0, 2.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn period_three_contains_li_yorke() {
        let z = 2.0 * (-5.0 * PI / 14.0).sin();
        let orbits = periodic_orbits(3).unwrap();
        assert!(orbits.iter().any(|o| o.contains(z, 1e-9)));
        for o in &orbits {
            assert!(o.cyclic_residual() < 1e-9);
        }
        // (27 − 3)/3 = 8 prime orbits
        assert_eq!(orbits.len(), 8);
    }

    #[test]
    fn periodic_point_counts_match_sign_changes() {
        for n in 1..=5 {
            let pts = pl_periodic_points(n).unwrap();
            assert_eq!(pts.len(), 3usize.pow(n as u32));
            // grid count of sign changes of fⁿ(x) − x, plus the fixed endpoints ±1
            let m = 200_000;
            let g = |x: f64| {
                let mut y = x;
                for _ in 0..n {
                    y = pl_unchecked(y);
                }
                y - x
            };
            let mut changes = 0;
            let mut prev = g(-1.0 + 1.0 / m as f64);
            for k in 2..m {
                let cur = g(-1.0 + 2.0 * k as f64 / m as f64 - 1.0 / m as f64);
                if (cur > 0.0) != (prev > 0.0) {
                    changes += 1;
                }
                prev = cur;
            }
            assert_eq!(changes + 2, pts.len(), "n = {n}");
        }
    }

    #[test]
    fn laps() {
        assert_eq!(lap_entropy(1).unwrap(), (3, 3f64.ln()));
        assert_eq!(lap_entropy(4).unwrap().0, 81);
        for n in 1..=8 {
            assert!((lap_entropy(n).unwrap().1 - 3f64.ln()).abs() < 1e-12);
        }
        assert!(lap_entropy(0).is_err());
        assert!(lap_entropy(13).is_err());
    }
}

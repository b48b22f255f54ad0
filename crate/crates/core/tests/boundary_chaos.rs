use std::f64::consts::PI;

use gdfractal::boundary::{
    boundary_to_chebyshev, chebyshev_map, conjugacy_from_pl, conjugacy_to_pl, cubic_map, periodic_orbits, pl_map,
    ORBIT_TOL,
};
use gdfractal::criticality::q_bar;
use gdfractal::quotient::{lift, omega_membership, OmegaClass, QuotientParams, QuotientState};
use gdfractal::scalar::{gd_step, ScalarProblem, ScalarState};
use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

#[test]
fn conjugacies_on_dense_grids() {
    for i in 0..=1000 {
        let x = -1.0 + 2.0 * i as f64 / 1000.0;
        let z = conjugacy_to_pl(x).unwrap();
        assert!((cubic_map(z).unwrap() - conjugacy_to_pl(pl_map(x).unwrap()).unwrap()).abs() <= 1e-12);
        assert!((conjugacy_from_pl(z).unwrap() - x).abs() <= 1e-14);
        // halving stage: z ↦ z/2 carries z³ − 3z onto 4x³ − 3x
        let c = boundary_to_chebyshev(z).unwrap();
        assert!((chebyshev_map(c).unwrap() - boundary_to_chebyshev(cubic_map(z).unwrap()).unwrap()).abs() <= 1e-12);
    }
}

#[test]
fn orbits_of_every_period_are_periodic_and_prime() {
    for n in 1..=10 {
        let orbits = periodic_orbits(n).unwrap();
        assert!(!orbits.is_empty(), "period {n}");
        for o in &orbits {
            assert_eq!(o.points.len(), n);
            assert!(o.cyclic_residual() <= ORBIT_TOL);
            // prime: no proper divisor returns to the start
            for k in 1..n {
                if n % k == 0 {
                    let mut z = o.points[0];
                    for _ in 0..k {
                        z = cubic_map(z.clamp(-2.0, 2.0)).unwrap();
                    }
                    assert!((z - o.points[0]).abs() > ORBIT_TOL, "period {n} orbit repeats after {k}");
                }
            }
        }
    }
    let li_yorke = 2.0 * (-5.0 * PI / 14.0).sin();
    assert!(periodic_orbits(3).unwrap().iter().any(|o| o.contains(li_yorke, 1e-9)));
}

/// A scalar state with `q̄ = 8/η` exactly, lifted from the curve `w = 4 + μz`.
fn on_boundary(rng: &mut Xoshiro256PlusPlus, d: usize, y: f64, eta: f64) -> Option<ScalarState> {
    let p = ScalarProblem::unregularized(y, d).unwrap();
    let q = QuotientParams::from_problem(&p, eta).unwrap();
    let mu = q.mu;
    let z = rng.random_range(-2.0..2.0);
    let s = QuotientState::new(z, 4.0 + mu * z);
    if omega_membership(&q, s) != OmegaClass::Interior {
        return None;
    }
    let reference = ScalarState::new(
        (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
        (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap();
    lift(&p, eta, s, &reference).ok()
}

#[test]
fn boundary_of_the_region_is_invariant() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(44);
    let mut tested = 0;
    while tested < 500 {
        let d = rng.random_range(1..5usize);
        let y: f64 = rng.random_range(-1.5..1.5);
        let eta = rng.random_range(0.05..0.9) / y.abs().max(1.0);
        let Some(s) = on_boundary(&mut rng, d, y, eta) else { continue };
        let before = eta * q_bar(y, &s);
        assert!((before - 8.0).abs() < 1e-9, "constructed state has eta*qbar = {before}");
        let p = ScalarProblem::unregularized(y, d).unwrap();
        let next = gd_step(&p, eta, &s).unwrap();
        let after = eta * q_bar(y, &next);
        assert!((after - 8.0).abs() < 1e-9, "after one step eta*qbar = {after}");
        tested += 1;
    }
}

fn parallel_gap(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let same: f64 = a.iter().zip(b).map(|(x, y)| (x / na - y / nb).powi(2)).sum::<f64>().sqrt();
    let flip: f64 = a.iter().zip(b).map(|(x, y)| (x / na + y / nb).powi(2)).sum::<f64>().sqrt();
    same.min(flip)
}

proptest! {
    #[test]
    fn sum_direction_is_preserved(d in 2..6usize, y in -2.0..2.0f64, eta in 0.01..0.5f64, raw in prop::collection::vec(-2.0..2.0f64, 10), steps in 1..20usize) {
        let p = ScalarProblem::unregularized(y, d).unwrap();
        let s0 = ScalarState::new(raw[..d].to_vec(), raw[5..5 + d].to_vec()).unwrap();
        let sum0: Vec<f64> = s0.u.iter().zip(&s0.v).map(|(a, b)| a + b).collect();
        prop_assume!(sum0.iter().map(|x| x * x).sum::<f64>() > 1e-4);
        let mut s = s0.clone();
        for _ in 0..steps {
            let next = gd_step(&p, eta, &s).unwrap();
            let sum: Vec<f64> = next.u.iter().zip(&next.v).map(|(a, b)| a + b).collect();
            if !next.is_finite() || sum.iter().map(|x| x * x).sum::<f64>() < 1e-200 || next.sq_norm() > 1e100 {
                break;
            }
            prop_assert!(parallel_gap(&sum0, &sum) <= 1e-12);
            s = next;
        }
    }
}

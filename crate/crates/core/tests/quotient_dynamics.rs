use gdfractal::quotient::{
    branch_inverse, monotonicity_class, omega_membership, preimage_all, project_residual, project_scaled, q_value,
    quotient_jacobian, quotient_step, unscaled_step, BranchId, Monotonicity, OmegaClass, QuotientParams, QuotientState,
};
use gdfractal::scalar::{gd_step, ScalarProblem, ScalarState};
use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// A point of the cone `w ≥ 2|z + μ|` with `w ≤ w_max`.
fn cone_point(rng: &mut Xoshiro256PlusPlus, mu: f64, w_max: f64) -> QuotientState {
    let w = rng.random_range(0.0..w_max);
    let z = -mu + rng.random_range(-0.5..0.5) * w;
    QuotientState::new(z, w)
}

#[test]
fn semi_conjugacy_on_random_states() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(21);
    for _ in 0..1000 {
        let d = rng.random_range(1..6usize);
        let y: f64 = rng.random_range(-2.0..2.0);
        let lambda = rng.random_range(0.0..0.5);
        let eta = rng.random_range(0.01..1.0) / y.abs().max(1.0);
        let p = ScalarProblem::new(y, lambda, d).unwrap();
        let s = ScalarState::new(
            (0..d).map(|_| rng.random_range(-2.0..2.0)).collect(),
            (0..d).map(|_| rng.random_range(-2.0..2.0)).collect(),
        )
        .unwrap();
        let q = QuotientParams::from_problem(&p, eta).unwrap();
        let lhs = project_scaled(&gd_step(&p, eta, &s).unwrap(), &p, eta).unwrap();
        let rhs = quotient_step(&q, project_scaled(&s, &p, eta).unwrap());
        assert!(rel_close(lhs.z, rhs.z, 1e-10) && rel_close(lhs.w, rhs.w, 1e-10), "{lhs:?} vs {rhs:?}");
        let raw = unscaled_step(eta, y, lambda, project_residual(&p, &s));
        let after = project_residual(&p, &gd_step(&p, eta, &s).unwrap());
        assert!(rel_close(raw.0, after.0, 1e-10) && rel_close(raw.1, after.1, 1e-10));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn scaling_conjugates_f_and_big_f(eta in 0.01..2.0f64, y in -2.0..2.0f64, lambda in 0.0..1.0f64, z in -3.0..3.0f64, w in 0.0..10.0f64) {
        let q = QuotientParams::new(eta * y, eta * lambda).unwrap();
        let (zn, wn) = unscaled_step(eta, y, lambda, (z, w));
        let big = quotient_step(&q, QuotientState::new(eta * z, eta * w));
        prop_assert!(rel_close(eta * zn, big.z, 1e-12) && rel_close(eta * wn, big.w, 1e-12));
    }

    #[test]
    fn boundary_lines_factor(mu in -0.9..0.9f64, nu in 0.0..0.9f64, z in -3.0..3.0f64, w in 0.0..10.0f64) {
        let q = QuotientParams::new(mu, nu).unwrap();
        let s = quotient_step(&q, QuotientState::new(z, w));
        let plus = (w - 2.0 * (z + mu)) * (1.0 + z - nu).powi(2);
        let minus = (w + 2.0 * (z + mu)) * (-1.0 + z + nu).powi(2);
        let scale = (1.0 + w.abs()) * (1.0 + z * z).powi(2);
        prop_assert!((s.w - 2.0 * (s.z + mu) - plus).abs() <= 1e-12 * scale);
        prop_assert!((s.w + 2.0 * (s.z + mu) - minus).abs() <= 1e-12 * scale);
    }

    #[test]
    fn q_floor_on_the_cone(mu in -0.99..0.99f64, w in 0.0..50.0f64, t in -0.5..0.5f64) {
        let q = QuotientParams::new(mu, 0.0).unwrap();
        let s = QuotientState::new(-mu + t * w, w);
        prop_assert!(q_value(&q, s).unwrap() >= 4.0 * mu.abs() - 1e-12);
    }
}

#[test]
fn unregularized_monotonicity_follows_the_line() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(8);
    let mut checked = 0;
    while checked < 10_000 {
        let mu = rng.random_range(-0.95..0.95);
        let q = QuotientParams::new(mu, 0.0).unwrap();
        let s = cone_point(&mut rng, mu, 12.0);
        let line = s.w - mu * s.z - 4.0;
        let floor = q_value(&q, s).unwrap() - 4.0 * mu.abs();
        if line.abs() < 1e-6 || s.z.abs() < 1e-6 || floor < 1e-6 {
            continue;
        }
        let next = quotient_step(&q, s);
        let delta = q_value(&q, next).unwrap() - q_value(&q, s).unwrap();
        let want = if line < 0.0 { Monotonicity::Decrease } else { Monotonicity::Increase };
        assert_eq!(monotonicity_class(&q, s), want, "{s:?} mu={mu}");
        assert_eq!(delta < 0.0, line < 0.0, "{s:?} mu={mu}: dQ={delta}, line={line}");
        checked += 1;
    }
}

/// Newton on `F(x) = target` from `x`, returning the root if it converges.
fn newton(q: &QuotientParams, mut x: QuotientState, target: QuotientState) -> Option<QuotientState> {
    for _ in 0..60 {
        let f = quotient_step(q, x);
        let (fz, fw) = (f.z - target.z, f.w - target.w);
        if fz.abs().max(fw.abs()) < 1e-11 {
            return Some(x);
        }
        let [[a, b], [c, d]] = quotient_jacobian(q, x);
        let det = a * d - b * c;
        if det.abs() < 1e-14 {
            return None;
        }
        x = QuotientState::new(x.z - (d * fz - b * fw) / det, x.w - (a * fw - c * fz) / det);
        if !x.is_finite() || x.z.abs() > 1e3 || x.w.abs() > 1e4 {
            return None;
        }
    }
    None
}

#[test]
fn preimage_completeness_against_grid_search() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(13);
    for _ in 0..20 {
        let mu: f64 = rng.random_range(-0.6..0.6);
        let nu = rng.random_range(0.0..(1.0 - mu.abs()) * 0.9);
        let q = QuotientParams::new(mu, nu).unwrap();
        let mut target = cone_point(&mut rng, mu, 10.0);
        target.w += 0.05;
        let found = preimage_all(&q, target).unwrap();
        for x in &found {
            let f = quotient_step(&q, *x);
            assert!((f.z - target.z).abs() < 1e-9 && (f.w - target.w).abs() < 1e-9);
        }
        for i in 0..40 {
            for j in 0..40 {
                let start = QuotientState::new(-4.0 + 8.0 * (i as f64 + 0.5) / 40.0, 30.0 * (j as f64 + 0.5) / 40.0);
                let Some(root) = newton(&q, start, target) else { continue };
                if omega_membership(&q, root) == OmegaClass::Outside {
                    continue;
                }
                let near = found.iter().map(|x| x.distance(&root)).fold(f64::INFINITY, f64::min);
                assert!(near < 1e-6, "grid root {root:?} missing from {found:?} (target {target:?}, mu={mu}, nu={nu})");
            }
        }
    }
}

#[test]
fn branch_images_have_disjoint_z_ranges() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(4);
    let mut tested = 0;
    while tested < 200 {
        let mu = rng.random_range(-0.5..0.5);
        let nu = rng.random_range(0.0..0.4);
        let q = QuotientParams::new(mu, nu).unwrap();
        let t = cone_point(&mut rng, mu, 20.0);
        if q_value(&q, t).unwrap() <= 6.0 - 4.0 * nu + 1e-6 || omega_membership(&q, t) != OmegaClass::Interior {
            continue;
        }
        let a = 1.0 - nu;
        let g: Vec<QuotientState> = BranchId::ALL.iter().map(|&b| branch_inverse(&q, b, t).unwrap()).collect();
        assert!(g[0].z <= -a + 1e-9 && g[1].z.abs() <= a + 1e-9 && g[2].z >= a - 1e-9, "{g:?}");
        assert!(g[0].z < g[1].z && g[1].z < g[2].z);
        for x in &g {
            let f = quotient_step(&q, *x);
            assert!(f.distance(&t) < 1e-9);
        }
        tested += 1;
    }
}

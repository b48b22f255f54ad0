//! Periodic orbits, lap counts and the period-3 orbit of the cubic map that
//! governs GD on the edge of its convergence region.
//!
//! Usage: `cargo run --release --example boundary_orbits -- [max_period]`

use std::f64::consts::PI;

use gdfractal::boundary::{conjugacy_to_pl, lap_entropy, periodic_orbits, ORBIT_TOL};

fn main() -> anyhow::Result<()> {
    let max: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(8);
    println!("{:>6} {:>8} {:>10} {:>10} {:>12}", "period", "orbits", "laps", "entropy", "residual");
    for n in 1..=max {
        let orbits = periodic_orbits(n)?;
        let (laps, h) = lap_entropy(n)?;
        let worst = orbits.iter().map(|o| o.cyclic_residual()).fold(0.0, f64::max);
        println!("{n:>6} {:>8} {laps:>10} {h:>10.6} {worst:>12.1e}", orbits.len());
    }
    println!("ln 3 = {:.6}", 3f64.ln());
    let start = conjugacy_to_pl(-5.0 / 7.0)?;
    assert!((start - 2.0 * (-5.0 * PI / 14.0).sin()).abs() < 1e-12);
    let orbit = periodic_orbits(3)?.into_iter().find(|o| o.contains(start, ORBIT_TOL));
    println!("period-3 orbit through {start:.6}: {:?}", orbit.map(|o| o.points));
    Ok(())
}

//! Closed-form critical step size of a random initialization against the step
//! size at which simulated GD stops converging.
//!
//! Usage: `cargo run --release --example critical_eta -- [d] [seed]`

use gdfractal::criticality::{bisect_critical_eta, critical_step_size_of, prior_critical_bound, q_bar};
use gdfractal::scalar::{ScalarProblem, ScalarState};
use rand::{RngExt, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let d: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(5);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let y = 0.8;
    let s = ScalarState::new(
        (0..d).map(|_| rng.random_range(-2.0..2.0)).collect(),
        (0..d).map(|_| rng.random_range(-2.0..2.0)).collect(),
    )?;
    let star = critical_step_size_of(y, &s);
    let p = ScalarProblem::unregularized(y, d)?;
    let bisected = bisect_critical_eta(&p, &s, 0.5 * star, (1.5 * star).min(0.999 / y), 200_000, 1e-6)?;
    println!("q̄            {:.6}", q_bar(y, &s));
    println!("earlier bound {:.6}", prior_critical_bound(y, &s));
    println!("η* formula    {star:.6}");
    println!("η* bisected   {bisected:.6} (relative gap {:.1e})", (bisected - star).abs() / star);
    Ok(())
}

//! Finite-time basins of the saddle at the origin and of the unstable minimizers,
//! and how their occupied-cell fraction shrinks under refinement.
//!
//! Usage: `cargo run --release --example saddle_basin -- [resolution]`

use gdfractal::fractal::GridSpec;
use gdfractal::matrix::{occupied_fraction, saddle_basin_points, unstable_basin_points};
use gdfractal::scalar::ScalarProblem;

fn main() -> anyhow::Result<()> {
    let n: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(400);
    let p = ScalarProblem::unregularized(1.0, 1)?;
    let eta = 0.2;
    for res in [n, 2 * n] {
        let spec = GridSpec::square(-4.0, 4.0, res)?;
        let saddle = saddle_basin_points(&p, eta, &spec, 250)?;
        let unstable = unstable_basin_points(&p, eta, &spec, 6)?;
        println!(
            "{res}²: saddle {} points, {:.3e} of cells; unstable {} points, {:.3e} of cells",
            saddle.len(),
            occupied_fraction(&saddle, &spec),
            unstable.len(),
            occupied_fraction(&unstable, &spec)
        );
    }
    Ok(())
}

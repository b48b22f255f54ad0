//! Convergence basin of scalar GD over the `(u, v)` plane, written as a PGM image,
//! followed by a regularization sweep reporting how the basin boundary's
//! box-counting dimension changes with `λ`.
//!
//! Usage: `cargo run --release --example scalar_basin -- [resolution] [out.pgm]`

use std::fs::File;
use std::io::BufWriter;

use gdfractal::fractal::{
    box_counting, default_widths, dprime_area_fraction, extract_boundary, scalar_basin, write_pgm, GridSpec,
    LABEL_CONVERGED,
};
use gdfractal::scalar::{ScalarProblem, StepConfig};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(600);
    let out = args.next().unwrap_or_else(|| "scalar_basin.pgm".into());
    let eta = 0.2;
    let spec = GridSpec::square(-4.0, 4.0, n)?;

    let p = ScalarProblem::unregularized(1.0, 1)?;
    let g = scalar_basin(&p, &StepConfig::basin_preset(eta, 1000)?, &spec)?;
    write_pgm(&g, BufWriter::new(File::create(&out)?))?;
    println!(
        "λ = 0: converged fraction {:.4}, analytic region {:.4} -> {out}",
        g.fraction(LABEL_CONVERGED),
        dprime_area_fraction(1.0, eta, &spec, 4)
    );

    println!("{:>6} {:>10} {:>10} {:>8}", "λ", "converged", "dimension", "r²");
    for lambda in [0.0, 0.05, 0.1, 0.2, 0.4] {
        let p = ScalarProblem::new(1.0, lambda, 1)?;
        let g = scalar_basin(&p, &StepConfig::basin_preset(eta, 1000)?, &spec)?;
        let fit = box_counting(&extract_boundary(&g, LABEL_CONVERGED).points(&spec), &default_widths())?;
        println!("{lambda:>6} {:>10.4} {:>10.4} {:>8.4}", g.fraction(LABEL_CONVERGED), fit.dimension, fit.r_squared);
    }
    Ok(())
}

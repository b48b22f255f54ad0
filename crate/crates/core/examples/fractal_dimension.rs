//! Rasterizes the regularized quotient basin, extracts its boundary and estimates the
//! box-counting dimension.
//!
//! Usage: `cargo run --release --example fractal_dimension -- [resolution]`

use gdfractal::fractal::{
    box_counting, default_widths, extract_boundary, GridSpec, QuotientClassifier, LABEL_CONVERGED,
};
use gdfractal::scalar::ScalarProblem;

fn main() -> anyhow::Result<()> {
    let n: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1000);
    let problem = ScalarProblem::new(0.5, 0.2, 1)?;
    let classifier = QuotientClassifier::new(problem, 1.0, 200, 1e-5)?;
    let spec = GridSpec::new(-2.5, 3.0, 0.0, 10.0, n, n)?;
    let grid = classifier.rasterize(&spec);
    let boundary = extract_boundary(&grid, LABEL_CONVERGED);
    let fit = box_counting(&boundary.points(&spec), &default_widths())?;
    println!("converged fraction {:.4}", grid.fraction(LABEL_CONVERGED));
    println!("boundary cells     {}", boundary.count());
    println!("dimension          {:.4} (r² = {:.4})", fit.dimension, fit.r_squared);
    println!("counts             {:?}", fit.counts);
    Ok(())
}

//! Checks that the regularized basin boundary is covered by its images under the
//! three inverse branches of the quotient map.
//!
//! Usage: `cargo run --release --example self_similarity -- [resolution]`

use gdfractal::fractal::{
    extract_boundary_within_domain, self_similarity_check, GridSpec, QuotientClassifier, LABEL_CONVERGED,
};
use gdfractal::scalar::ScalarProblem;

fn main() -> anyhow::Result<()> {
    let n: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1000);
    let problem = ScalarProblem::new(0.5, 0.2, 1)?;
    let classifier = QuotientClassifier::new(problem, 1.0, 200, 1e-5)?;
    let spec = GridSpec::new(-2.5, 3.0, 0.0, 10.0, n, n)?;
    let grid = classifier.rasterize(&spec);
    let pts: Vec<_> = extract_boundary_within_domain(&grid, LABEL_CONVERGED)
        .points(&spec)
        .into_iter()
        .map(|(uv, sq)| classifier.to_scaled(uv, sq))
        .collect();
    let q = classifier.params();
    let lo = classifier.to_scaled(spec.x_min, spec.y_min);
    let hi = classifier.to_scaled(spec.x_max, spec.y_max);
    let diag = spec.cell_diagonal() * classifier.eta;
    let r = self_similarity_check(&q, &pts, Some((lo.z, hi.z, lo.w, hi.w)), 2.0 * diag)?;
    println!("boundary points   {}", pts.len());
    println!("checked           {}", r.checked);
    println!("cover distance    {:.3e} ({:.2} cell diagonals)", r.cover_dist, r.cover_dist / diag);
    println!("99th percentile   {:.3e}", r.cover_p99);
    println!("branch margin     {:.3e}", r.disjointness_margin);
    println!("image counts      {:?}", r.image_counts);
    println!("image z ranges    {:?}", r.image_z_ranges);
    println!("branch failures   {}", r.branch_failures);
    Ok(())
}

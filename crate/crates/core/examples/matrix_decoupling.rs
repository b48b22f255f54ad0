//! On the orthogonal slice, matrix GD splits into independent scalar problems, one
//! per column, and the critical step size is the smallest column's.
//!
//! Usage: `cargo run --release --example matrix_decoupling -- [seed]`

use gdfractal::linalg::random_frame;
use gdfractal::matrix::{
    bisect_matrix_critical_eta, decoupling_check, diagonalize_target, matrix_critical_step_size, slice_w_init,
    w_membership, MatrixProblem,
};
use gdfractal::scalar::ScalarState;
use nalgebra::DMatrix;

fn main() -> anyhow::Result<()> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    // a general target reduces to its singular values
    let y = DMatrix::from_row_slice(3, 3, &[0.9, 0.2, 0.0, -0.1, 0.6, 0.3, 0.2, 0.0, 0.4]);
    let svd = diagonalize_target(&y)?;
    println!("singular values {:?}", svd.sigma);
    let p = MatrixProblem::diagonal(&svd.sigma, 0.0, 5)?;
    let columns = [
        ScalarState::new(vec![0.8, -0.3], vec![0.5, 0.9])?,
        ScalarState::new(vec![1.2, 0.1], vec![-0.4, 0.7])?,
        ScalarState::scalar(-0.6, 1.4),
    ];
    let s0 = slice_w_init(&columns, &random_frame(5, 5, seed)?)?;
    println!("cross-column coupling {:.1e}", w_membership(&s0));
    let star = matrix_critical_step_size(&p, &s0)?;
    println!(
        "largest deviation from per-column GD over 500 steps: {:.1e}",
        decoupling_check(&p, 0.5 * star, &s0, 500)?
    );
    let bisected = bisect_matrix_critical_eta(&p, &s0, 0.5 * star, 1.5 * star, 200_000, 1e-6)?;
    println!("critical step: columns {star:.6}, bisected {bisected:.6}");
    Ok(())
}

//! Convergence over a random 2-plane through the parameters of a depth-3 chain
//! `W₀W₁W₂ ≈ Y`, written as a PGM image.
//!
//! Usage: `cargo run --release --example deep_slice -- [resolution] [seed] [out.pgm]`

use std::fs::File;
use std::io::BufWriter;

use gdfractal::fractal::{connected_components, rasterize, write_pgm, GridSpec, LABEL_CONVERGED, LABEL_NONCONVERGED};
use gdfractal::linalg::random_frame;
use gdfractal::matrix::{deep_global_min, deep_simulate};
use gdfractal::scalar::{OutcomeKind, StepConfig};
use nalgebra::{DMatrix, DVector};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(100);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    let out = args.next().unwrap_or_else(|| "deep_slice.pgm".into());
    let (lambda, depth) = (0.1, 3);
    let y = DMatrix::from_diagonal(&DVector::from_vec(vec![0.9, 0.5]));
    let shapes = [(2, 2); 3];
    let frame = random_frame(12, 2, seed)?;
    let min = deep_global_min(&y, lambda, depth)?;
    let c = StepConfig::basin_preset(0.1, 2000)?;
    let spec = GridSpec::square(-2.0, 2.0, n)?;
    let g = rasterize(&spec, format!("deep slice seed={seed}"), |a, b| {
        let theta: Vec<f64> = (0..12).map(|k| a * frame[(k, 0)] + b * frame[(k, 1)]).collect();
        let mut off = 0;
        let chain: Vec<DMatrix<f64>> = shapes
            .iter()
            .map(|&(r, c)| {
                let m = DMatrix::from_column_slice(r, c, &theta[off..off + r * c]);
                off += r * c;
                m
            })
            .collect();
        match deep_simulate(&chain, &y, lambda, min, &c) {
            Ok(o) if o.kind == OutcomeKind::ConvergedMinimizer => LABEL_CONVERGED,
            _ => LABEL_NONCONVERGED,
        }
    });
    write_pgm(&g, BufWriter::new(File::create(&out)?))?;
    println!(
        "global minimum {min:.6}; converged fraction {:.4} in {} components -> {out}",
        g.fraction(LABEL_CONVERGED),
        connected_components(&g, LABEL_CONVERGED)
    );
    Ok(())
}

//! With regularization, small steps pick the nearest global minimizer and larger
//! steps can pick the farthest.
//!
//! Usage: `cargo run --release --example small_step_selection -- [runs]`

use gdfractal::criticality::{classify_outcome, small_step_thresholds, Selection};
use gdfractal::scalar::{OutcomeKind, ScalarProblem, ScalarState, StepConfig};
use rand::{RngExt, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

fn main() -> anyhow::Result<()> {
    let runs: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(500);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
    let p = ScalarProblem::new(1.0, 0.2, 2)?;
    // the selection guarantees need η(λ + |y|) ≤ 1 and ηλ ≤ ½
    let cap = (1.0 / (p.lambda + p.y.abs())).min(0.5 / p.lambda);
    for (label, factor) in [("0.5 × 8/(4λ+q̄)", 0.5), ("1.9 × 8/(4λ+q̄)", 1.9), ("η = 1.2", 3.0)] {
        let (mut minus, mut plus, mut other) = (0, 0, 0);
        for _ in 0..runs {
            let s = ScalarState::new(
                (0..2).map(|_| rng.random_range(-2.0..2.0)).collect(),
                (0..2).map(|_| rng.random_range(-2.0..2.0)).collect(),
            )?;
            let (_, second) = small_step_thresholds(p.y, p.lambda, &s);
            let eta = if factor > 2.0 { 1.2 } else { factor * second.min(cap) };
            let c = StepConfig::new(eta, 200_000)?.with_loss_tol(1e-14)?;
            let out = classify_outcome(&p, &c, &s)?;
            match (out.outcome.kind, out.selection) {
                (OutcomeKind::ConvergedMinimizer, Some(Selection::PMinus)) => minus += 1,
                (OutcomeKind::ConvergedMinimizer, Some(Selection::PPlus)) => plus += 1,
                _ => other += 1,
            }
        }
        println!("{label:<22} p⁻ {minus:>5}  p⁺ {plus:>5}  not converged {other:>5}");
    }
    Ok(())
}

//! Builds pairs of initializations closer than `eps` that converge to very different
//! minimizers: to stable minimizers of different norm without regularization, and to
//! the nearest and farthest minimizer with it.
//!
//! Usage: `cargo run --release --example sensitivity_witnesses -- [eps]`

use gdfractal::criticality::{classify_outcome, witness_pair, Selection};
use gdfractal::quotient::{branch_inverse, BranchId, QuotientParams, QuotientState};
use gdfractal::scalar::{ScalarProblem, ScalarState, StepConfig};

fn main() -> anyhow::Result<()> {
    let eps: f64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1e-4);
    let reference = ScalarState::scalar(1.0, 0.4);
    let eta = 0.1;

    let p = ScalarProblem::unregularized(1.0, 1)?;
    // the limit point has loss ½(2/η)², far above the default divergence level
    let c = StepConfig::new(eta, 100_000)?.with_loss_tol(1e-14)?.with_divergence_threshold(1e6)?;
    // stable minimizers with ‖u‖² + ‖v‖² = 2.5 and 15
    let pair = witness_pair(
        &p,
        eta,
        QuotientState::new(0.0, eta * 2.5),
        QuotientState::new(0.0, eta * 15.0),
        &reference,
        eps,
        200,
    )?;
    let (a, b) = (classify_outcome(&p, &c, &pair.a)?, classify_outcome(&p, &c, &pair.b)?);
    println!("unregularized: {} limit-branch steps, separation {:.2e}", pair.n_lim, pair.separation);
    println!("  a = {:?} -> {:?}, norm² {:.6}", pair.a, a.outcome.kind, a.sq_norm);
    println!("  b = {:?} -> {:?}, norm² {:.6}", pair.b, b.outcome.kind, b.sq_norm);

    let p = ScalarProblem::new(1.0, 0.2, 1)?;
    let q = QuotientParams::from_problem(&p, eta)?;
    // the minimizers u = v = ±√(y − λ) share one quotient point
    let m = QuotientState::new(-q.nu, 2.0 * eta * (p.y - p.lambda));
    let ta = branch_inverse(&q, BranchId::G0, m)?;
    let tb = branch_inverse(&q, BranchId::G2, m)?;
    let pair = witness_pair(&p, eta, ta, tb, &reference, eps, 200)?;
    let (a, b) = (classify_outcome(&p, &c, &pair.a)?, classify_outcome(&p, &c, &pair.b)?);
    println!("regularized: {} limit-branch steps, separation {:.2e}", pair.n_lim, pair.separation);
    println!("  a = {:?} -> {:?}, {:?}", pair.a, a.outcome.kind, a.selection);
    println!("  b = {:?} -> {:?}, {:?}", pair.b, b.outcome.kind, b.selection);
    assert_ne!(a.selection, b.selection);
    assert!(matches!(a.selection, Some(Selection::PMinus)));
    Ok(())
}

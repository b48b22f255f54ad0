//! Projects a GD step to the planar quotient map and walks backwards through its
//! three inverse branches.
//!
//! Usage: `cargo run --release --example quotient_preimages`

use gdfractal::quotient::{
    branch_inverse, forward, g0_limit, limit_point, preimage_all, project_scaled, q_value, quotient_step,
    reach_initial, BranchId, QuotientParams, QuotientState,
};
use gdfractal::scalar::{gd_step, ScalarProblem, ScalarState};

fn main() -> anyhow::Result<()> {
    let (y, lambda, eta) = (0.5, 0.2, 1.0);
    let p = ScalarProblem::new(y, lambda, 3)?;
    let q = QuotientParams::from_problem(&p, eta)?;
    let s = ScalarState::new(vec![0.3, -1.2, 0.8], vec![1.1, 0.4, -0.5])?;
    let via_gd = project_scaled(&gd_step(&p, eta, &s)?, &p, eta)?;
    let via_map = quotient_step(&q, project_scaled(&s, &p, eta)?);
    println!("projected GD step {via_gd:?}");
    println!("quotient step     {via_map:?}");

    let target = QuotientState::new(0.2, 3.0);
    println!("Q(target) = {:.4}", q_value(&q, target)?);
    for x in preimage_all(&q, target)? {
        println!("  preimage {x:?} -> {:?}", quotient_step(&q, x));
    }
    for b in BranchId::ALL {
        println!("  {b:?}: {:?}", branch_inverse(&q, b, target));
    }

    let xi = limit_point(&q);
    let near = g0_limit(&q, QuotientState::new(0.0, 3.0), 60)?;
    println!("limit point {xi:?}, after 60 steps {near:?} (distance {:.1e})", near.distance(&xi));
    let start = reach_initial(&q, target, &[BranchId::G2, BranchId::G0], 12)?;
    let back = forward(&q, start, 14);
    println!("reach_initial -> {start:?}; 14 steps forward -> {back:?} (error {:.1e})", back.distance(&target));
    Ok(())
}

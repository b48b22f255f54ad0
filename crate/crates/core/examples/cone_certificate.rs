//! Without a target (`y = 0`) GD converges from points arbitrarily far out along
//! the cone `|z| < a·exp(−bw)`; this finds `(a, b)` and checks sampled points.
//!
//! Usage: `cargo run --release --example cone_certificate -- [samples]`

use gdfractal::fractal::{cone_certificate, in_exp_cone, sample_cone};
use gdfractal::quotient::{forward, quotient_step, QuotientParams};

fn main() -> anyhow::Result<()> {
    let samples: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(10_000);
    for nu in [0.1, 0.3, 0.5] {
        let cert = cone_certificate(nu, samples, 1e3, 1)?;
        let q = QuotientParams::new(0.0, nu)?;
        let pts = sample_cone(cert.a, cert.b, 1e3, samples, 2);
        let stay = pts.iter().filter(|&&s| in_exp_cone(cert.a, cert.b, quotient_step(&q, s))).count();
        let conv = pts
            .iter()
            .filter(|&&s| {
                let f = forward(&q, s, 20_000);
                f.z.abs() < 1e-12 && f.w.abs() < 1e-12
            })
            .count();
        println!(
            "ν = {nu}: a = {:.4}, b = {:.4}; {stay}/{samples} stay in the cone, {conv}/{samples} converge",
            cert.a, cert.b
        );
    }
    Ok(())
}

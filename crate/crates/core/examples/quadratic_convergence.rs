//! Drives STPP by hand on a strongly convex quadratic without gradient noise
//! and prints the optimality gap and consensus error at the root.
//!
//! cargo run --example quadratic_convergence

use ndarray::Array1;

use stpp::optimizers::{metrics, Algorithm, Optimizer};
use stpp::oracles::{gen_quadratic, Oracle, QuadraticParams};
use stpp::topology::gen_directed_ring;

fn main() -> stpp::Result<()> {
    let n = 8;
    let g = gen_directed_ring(n)?;
    let problem = gen_quadratic(
        QuadraticParams {
            n,
            p: 10,
            mu: 1.0,
            l: 10.0,
            heterogeneity: 1.0,
            sigma: 0.0,
        },
        11,
    )?;
    let opt = Optimizer::for_graph(Algorithm::Stpp, &g, 1)?;
    let gamma = 1.0 / (4.0 * (n * n) as f64 * problem.smoothness());
    let mut state = opt.init(&problem, Array1::zeros(problem.dim()).view(), 0, 0)?;
    println!("{:>6} {:>14} {:>14}", "iter", "opt_gap", "consensus");
    for t in 0..=20_000u64 {
        if t % 2000 == 0 {
            let m = metrics(&state, &problem);
            println!(
                "{t:>6} {:>14.4e} {:>14.4e}",
                m.opt_gap.unwrap_or(f64::NAN),
                m.consensus_err
            );
        }
        opt.step(&mut state, gamma, &problem)?;
    }
    Ok(())
}

//! Evaluates the theoretical stepsizes and transient-iteration bounds as the
//! network grows, and fits their growth exponent in `n`.
//!
//! cargo run --example theory_calculator

use stpp::harness::{theory_report, Regime, TheoryInputs};
use stpp::topology::{center_root, Family};

fn main() -> stpp::Result<()> {
    let ns: Vec<usize> = (4..=10).map(|e| 1 << e).collect();
    for regime in [Regime::Nonconvex, Regime::StronglyConvex] {
        println!("\n{regime:?}");
        println!(
            "{:<11} {:>5} {:>4} {:>4} {:>12} {:>12}",
            "family", "n", "d_R", "d_C", "stepsize", "transient"
        );
        for family in [
            Family::DiRing,
            Family::Ring,
            Family::Grid,
            Family::StaticExp,
        ] {
            let mut points = Vec::new();
            for &n in &ns {
                let g = family.generate(n, None)?;
                let inputs = TheoryInputs {
                    regime,
                    l: 1.0,
                    mu: Some(0.1),
                    sigma: 1.0,
                    delta_f: 1.0,
                    iterations: 100_000,
                };
                let rep = theory_report(&g, center_root(&g)?, Some(family), inputs)?;
                println!(
                    "{:<11} {:>5} {:>4} {:>4} {:>12.3e} {:>12.3e}",
                    family.name(),
                    n,
                    rep.trees.d_r,
                    rep.trees.d_c,
                    rep.stepsize.value,
                    rep.transient_iterations
                );
                points.push(((n as f64).ln(), rep.transient_iterations.ln()));
            }
            let (first, last) = (points[0], points[points.len() - 1]);
            println!(
                "{:<11} growth exponent ~ {:.2}",
                "",
                (last.1 - first.1) / (last.0 - first.0)
            );
        }
    }
    Ok(())
}

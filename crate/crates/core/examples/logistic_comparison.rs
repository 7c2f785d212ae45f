//! Runs STPP and the four baselines on the reduced-scale heterogeneous
//! logistic-regression benchmark over a directed ring, writing one CSV per
//! algorithm.
//!
//! cargo run --release --example logistic_comparison -- out/

use std::path::PathBuf;

use stpp::harness::{emit_csv, run_experiment, ExperimentConfig};
use stpp::optimizers::Algorithm;

fn main() -> stpp::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from);
    if let Some(dir) = &out {
        std::fs::create_dir_all(dir)?;
    }
    println!(
        "{:<12} {:>14} {:>14} {:>8}",
        "algorithm", "grad_norm_sq", "consensus", "secs"
    );
    for alg in Algorithm::ALL {
        let cfg = ExperimentConfig::logistic_reference(alg);
        let rec = run_experiment(&cfg)?;
        let last = rec.final_row();
        println!(
            "{:<12} {:>14.4e} {:>14.4e} {:>8.2}",
            alg.name(),
            last.metrics.grad_norm_sq_root,
            last.metrics.consensus_err,
            rec.wall_clock_secs
        );
        if let Some(dir) = &out {
            emit_csv(&rec, &dir.join(format!("{}.csv", alg.name())))?;
        }
    }
    Ok(())
}

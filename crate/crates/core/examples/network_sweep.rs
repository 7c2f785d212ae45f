//! Sweeps the network size for STPP on a noisy quadratic over static
//! exponential graphs and prints the tail gradient norm per size.
//!
//! cargo run --release --example network_sweep

use stpp::harness::{sweep_n, write_sweep_csv, ExperimentConfig};

fn main() -> stpp::Result<()> {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/configs/quadratic_sweep.json"
    );
    let cfg = ExperimentConfig::from_json_file(path.as_ref())?;
    let rows = sweep_n(&cfg, &[4, 8, 16, 32], 1e-3)?;
    write_sweep_csv(&rows, std::io::stdout().lock())?;
    Ok(())
}

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use stpp::harness::{
    emit_csv, run_experiment, sweep_n, theory_report, write_sweep_csv, ExperimentConfig, Regime,
    TheoryInputs,
};
use stpp::mixing::{build_pull_matrix, build_push_matrix, write_matrix_market};
use stpp::optimizers::Algorithm;
use stpp::topology::{tree_stats, Family, SpanningTreePair};
use stpp::Result;

#[derive(Parser)]
#[command(name = "stpp", version, about = "Spanning-tree push-pull experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a topology with its pull/push trees as JSON.
    Topo {
        #[arg(long)]
        family: Family,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, default_value_t = 1)]
        root: usize,
        /// Directory receiving R.mtx and C.mtx.
        #[arg(long)]
        emit_matrices: Option<PathBuf>,
    },
    /// Run one experiment from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        algo: Option<Algorithm>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the full run record as JSON.
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Repeat an experiment across network sizes.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        ns: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-3)]
        threshold: f64,
    },
    /// Evaluate the theoretical stepsize and transient bound.
    Theory {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        family: Family,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, default_value_t = 1)]
        root: usize,
        #[arg(long, default_value = "nonconvex")]
        regime: Regime,
        #[arg(long = "L")]
        l: f64,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 1.0)]
        delta_f: f64,
        #[arg(long = "T")]
        t: u64,
    },
}

fn topo(
    family: Family,
    n: usize,
    m: Option<usize>,
    root: usize,
    emit: Option<PathBuf>,
) -> Result<()> {
    let g = family.generate(n, m)?;
    let trees = SpanningTreePair::extract(&g, root)?;
    let pull = tree_stats(&trees.pull);
    let push = tree_stats(&trees.push);
    let doc = json!({
        "family": family,
        "n": n,
        "root": root,
        "edges": g.edges(),
        "pull_parent": trees.pull.links(),
        "push_child": trees.push.links(),
        "pull_depth": trees.pull.depths(),
        "push_depth": trees.push.depths(),
        "d_R": pull.d,
        "d_C": push.d,
        "r_counts": pull.counts,
        "c_counts": push.counts,
        "r_avg": pull.avg,
        "c_avg": push.avg,
    });
    println!("{}", serde_json::to_string_pretty(&doc)?);
    if let Some(dir) = emit {
        fs::create_dir_all(&dir)?;
        write_matrix_market(
            BufWriter::new(File::create(dir.join("R.mtx"))?),
            &build_pull_matrix(&trees.pull)?,
        )?;
        write_matrix_market(
            BufWriter::new(File::create(dir.join("C.mtx"))?),
            &build_push_matrix(&trees.push)?,
        )?;
    }
    Ok(())
}

fn run(
    config: PathBuf,
    algo: Option<Algorithm>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    record: Option<PathBuf>,
) -> Result<()> {
    let mut cfg = ExperimentConfig::from_json_file(&config)?;
    if let Some(a) = algo {
        cfg.algorithm = a;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if out.is_some() {
        cfg.output = out;
    }
    let rec = run_experiment(&cfg)?;
    if let Some(path) = &cfg.output {
        emit_csv(&rec, path)?;
    }
    if let Some(path) = record {
        serde_json::to_writer(BufWriter::new(File::create(path)?), &rec)?;
    }
    let last = rec.final_row();
    let summary = json!({
        "algorithm": cfg.algorithm,
        "iterations": cfg.iterations,
        "repetitions": cfg.repetitions,
        "final": last,
        "wall_clock_secs": rec.wall_clock_secs,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn sweep(config: PathBuf, ns: Vec<usize>, out: Option<PathBuf>, threshold: f64) -> Result<()> {
    let cfg = ExperimentConfig::from_json_file(&config)?;
    let rows = sweep_n(&cfg, &ns, threshold)?;
    match out {
        Some(path) => write_sweep_csv(&rows, BufWriter::new(File::create(path)?))?,
        None => write_sweep_csv(&rows, std::io::stdout().lock())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Topo {
            family,
            n,
            m,
            root,
            emit_matrices,
        } => topo(family, n, m, root, emit_matrices),
        Command::Run {
            config,
            algo,
            out,
            seed,
            record,
        } => run(config, algo, out, seed, record),
        Command::Sweep {
            config,
            ns,
            out,
            threshold,
        } => sweep(config, ns, out, threshold),
        Command::Theory {
            n,
            family,
            m,
            root,
            regime,
            l,
            mu,
            sigma,
            delta_f,
            t,
        } => family
            .generate(n, m)
            .and_then(|g| {
                let inputs = TheoryInputs {
                    regime,
                    l,
                    mu,
                    sigma,
                    delta_f,
                    iterations: t,
                };
                theory_report(&g, root, Some(family), inputs)
            })
            .and_then(|rep| {
                println!("{}", serde_json::to_string_pretty(&rep)?);
                Ok(())
            }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

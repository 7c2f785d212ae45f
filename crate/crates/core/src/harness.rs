//! Experiment runner, stepsize schedules, theory calculator and reporting.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizers::{metrics, Algorithm, MetricRow, Optimizer};
use crate::oracles::{
    gen_logistic, gen_quadratic, LogisticParams, Oracle, ProblemInstance, QuadraticParams,
};
use crate::rng::{derive_seed, Stream};
use crate::topology::{tree_stats, DirectedGraph, Family, SpanningTreePair, TreeStats};

/// Metric rows are kept for every iteration up to this horizon.
const DENSE_RECORD_LIMIT: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologySpec {
    pub family: Family,
    pub n: usize,
    /// Sub-ring count for `multi-subring`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// 1-based root of the spanning trees and output agent; defaults to 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<usize>,
}

impl TopologySpec {
    pub fn build(&self) -> Result<DirectedGraph> {
        self.family.generate(self.n, self.m)
    }

    pub fn root(&self) -> usize {
        self.root.unwrap_or(1)
    }
}

/// Problem family and its parameters; the agent count comes from the topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ProblemSpec {
    Logistic {
        p: usize,
        samples: usize,
        reg: f64,
        heterogeneity: f64,
        #[serde(default = "one")]
        batch: usize,
    },
    Quadratic {
        p: usize,
        mu: f64,
        #[serde(rename = "L")]
        l: f64,
        heterogeneity: f64,
        sigma: f64,
    },
}

fn one() -> usize {
    1
}

impl ProblemSpec {
    pub fn build(&self, n: usize, seed: u64) -> Result<ProblemInstance> {
        Ok(match *self {
            ProblemSpec::Logistic {
                p,
                samples,
                reg,
                heterogeneity,
                batch,
            } => ProblemInstance::Logistic(gen_logistic(
                LogisticParams {
                    n,
                    p,
                    samples,
                    reg,
                    heterogeneity,
                    batch,
                },
                seed,
            )?),
            ProblemSpec::Quadratic {
                p,
                mu,
                l,
                heterogeneity,
                sigma,
            } => ProblemInstance::Quadratic(gen_quadratic(
                QuadraticParams {
                    n,
                    p,
                    mu,
                    l,
                    heterogeneity,
                    sigma,
                },
                seed,
            )?),
        })
    }

    pub fn dim(&self) -> usize {
        match *self {
            ProblemSpec::Logistic { p, .. } | ProblemSpec::Quadratic { p, .. } => p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Schedule {
    Constant,
    /// Multiply the stepsize by `factor` every `period` iterations.
    Decay {
        factor: f64,
        period: u64,
    },
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Schedule::Constant => Ok(()),
            Schedule::Decay { factor, period } => {
                if !(factor > 0.0 && factor <= 1.0) || period == 0 {
                    Err(Error::Config(format!(
                        "decay needs factor in (0, 1] and period >= 1, got {factor}/{period}"
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Stepsize used for the update out of iteration `t`.
    pub fn stepsize_at(&self, base: f64, t: u64) -> f64 {
        match *self {
            Schedule::Constant => base,
            Schedule::Decay { factor, period } => {
                let k = (t / period).min(i32::MAX as u64) as i32;
                base * factor.powi(k)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub topology: TopologySpec,
    pub problem: ProblemSpec,
    pub algorithm: Algorithm,
    /// Base stepsize before the schedule.
    pub gamma: f64,
    /// Run STPP with `gamma / n` instead of `gamma`.
    #[serde(default)]
    pub stpp_divide_by_n: bool,
    #[serde(default = "constant_schedule")]
    pub schedule: Schedule,
    pub iterations: u64,
    #[serde(default = "three")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    /// Record every k-th iteration; defaults to 1 for short runs and
    /// `ceil(T / 10^4)` beyond.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_every: Option<u64>,
    /// Common starting point; zeros when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn constant_schedule() -> Schedule {
    Schedule::Constant
}

fn three() -> usize {
    3
}

impl ExperimentConfig {
    /// Reduced-scale version of the logistic-regression comparison:
    /// directed ring, `n = 20`, `p = 50`, `J = 100`, `gamma = 0.4`, STPP at
    /// `gamma / n`, 0.8 decay every 300 iterations, `T = 1500`.
    pub fn logistic_reference(algorithm: Algorithm) -> Self {
        Self {
            topology: TopologySpec {
                family: Family::DiRing,
                n: 20,
                m: None,
                root: None,
            },
            problem: ProblemSpec::Logistic {
                p: 50,
                samples: 100,
                reg: 0.01,
                heterogeneity: 0.2,
                batch: 1,
            },
            algorithm,
            gamma: 0.4,
            stpp_divide_by_n: true,
            schedule: Schedule::Decay {
                factor: 0.8,
                period: 300,
            },
            iterations: 1500,
            repetitions: 3,
            seed: 0,
            record_every: None,
            x0: None,
            output: None,
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be >= 1".into()));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!(
                "gamma must be finite and >= 0, got {}",
                self.gamma
            )));
        }
        if self.record_every == Some(0) {
            return Err(Error::Config("record_every must be >= 1".into()));
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != self.problem.dim() {
                return Err(Error::Config(format!(
                    "x0 has length {}, problem dimension is {}",
                    x0.len(),
                    self.problem.dim()
                )));
            }
        }
        self.schedule.validate()
    }

    pub fn record_every(&self) -> u64 {
        self.record_every.unwrap_or_else(|| {
            if self.iterations <= DENSE_RECORD_LIMIT {
                1
            } else {
                self.iterations.div_ceil(DENSE_RECORD_LIMIT)
            }
        })
    }

    /// Base stepsize after the STPP `gamma / n` convention.
    pub fn effective_gamma(&self) -> f64 {
        if self.algorithm == Algorithm::Stpp && self.stpp_divide_by_n {
            self.gamma / self.topology.n as f64
        } else {
            self.gamma
        }
    }

    pub fn dataset_seed(&self) -> u64 {
        derive_seed(&[self.seed, Stream::Dataset as u64])
    }

    pub fn repetition_seed(&self, rep: usize) -> u64 {
        derive_seed(&[self.seed, Stream::Repetition as u64, rep as u64])
    }
}

/// One recorded iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecordRow {
    pub iter: u64,
    pub stepsize: f64,
    #[serde(flatten)]
    pub metrics: MetricRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    /// One series per repetition.
    pub series: Vec<Vec<RecordRow>>,
    /// Element-wise mean across repetitions.
    pub mean: Vec<RecordRow>,
    pub wall_clock_secs: f64,
}

impl RunRecord {
    /// Mean of the averaged `||grad f(x_root)||^2` over the last `fraction`
    /// of recorded rows (at least one row).
    pub fn tail_grad_norm(&self, fraction: f64) -> f64 {
        let rows = &self.mean;
        let take = ((rows.len() as f64 * fraction).ceil() as usize).clamp(1, rows.len());
        rows[rows.len() - take..]
            .iter()
            .map(|r| r.metrics.grad_norm_sq_root)
            .sum::<f64>()
            / take as f64
    }

    pub fn final_row(&self) -> &RecordRow {
        self.mean.last().expect("records always hold t = 0")
    }
}

fn mean_series(series: &[Vec<RecordRow>]) -> Vec<RecordRow> {
    let reps = series.len() as f64;
    let mean_opt = |vals: Vec<Option<f64>>| -> Option<f64> {
        vals.iter().copied().sum::<Option<f64>>().map(|s| s / reps)
    };
    (0..series[0].len())
        .map(|k| {
            let rows: Vec<&RecordRow> = series.iter().map(|s| &s[k]).collect();
            RecordRow {
                iter: rows[0].iter,
                stepsize: rows[0].stepsize,
                metrics: MetricRow {
                    grad_norm_sq_root: rows
                        .iter()
                        .map(|r| r.metrics.grad_norm_sq_root)
                        .sum::<f64>()
                        / reps,
                    opt_gap: mean_opt(rows.iter().map(|r| r.metrics.opt_gap).collect()),
                    consensus_err: rows.iter().map(|r| r.metrics.consensus_err).sum::<f64>() / reps,
                    fval_gap: mean_opt(rows.iter().map(|r| r.metrics.fval_gap).collect()),
                },
            }
        })
        .collect()
}

/// Runs one repetition of an already-built optimizer and problem.
pub fn run_repetition<O: Oracle + ?Sized>(
    optimizer: &Optimizer,
    oracle: &O,
    cfg: &ExperimentConfig,
    seed: u64,
    root: usize,
) -> Result<Vec<RecordRow>> {
    let x0 = cfg
        .x0
        .as_ref()
        .map_or_else(|| Array1::zeros(oracle.dim()), |v| Array1::from(v.clone()));
    let mut state = optimizer.init(oracle, x0.view(), seed, root)?;
    let every = cfg.record_every();
    let base = cfg.effective_gamma();
    let mut rows = Vec::with_capacity((cfg.iterations / every + 2) as usize);
    for t in 0..=cfg.iterations {
        let gamma = cfg.schedule.stepsize_at(base, t);
        if t % every == 0 || t == cfg.iterations {
            rows.push(RecordRow {
                iter: t,
                stepsize: gamma,
                metrics: metrics(&state, oracle),
            });
        }
        if t < cfg.iterations {
            optimizer.step(&mut state, gamma, oracle)?;
        }
    }
    Ok(rows)
}

/// Builds topology, weights and problem from `cfg`, then runs every
/// repetition (concurrently; results do not depend on scheduling).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let start = Instant::now();
    let g = cfg.topology.build()?;
    let root = cfg.topology.root();
    let optimizer = Optimizer::for_graph(cfg.algorithm, &g, root)?;
    let problem = cfg.problem.build(cfg.topology.n, cfg.dataset_seed())?;
    let series = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| {
            run_repetition(
                &optimizer,
                &problem,
                cfg,
                cfg.repetition_seed(rep),
                root - 1,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunRecord {
        config: cfg.clone(),
        mean: mean_series(&series),
        series,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

pub const CSV_HEADER: &str = "iter,grad_norm_sq_root,opt_gap,consensus_err,fval_gap,stepsize,rep";

fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

/// Writes one CSV row per recorded iteration per repetition; floats carry
/// 17 significant digits and unknown metrics are left empty.
pub fn write_csv<W: Write>(rec: &RunRecord, mut out: W) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for (rep, series) in rec.series.iter().enumerate() {
        for row in series {
            let m = &row.metrics;
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                row.iter,
                fmt_float(m.grad_norm_sq_root),
                fmt_opt(m.opt_gap),
                fmt_float(m.consensus_err),
                fmt_opt(m.fval_gap),
                fmt_float(row.stepsize),
                rep
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn emit_csv(rec: &RunRecord, path: &Path) -> Result<()> {
    write_csv(rec, BufWriter::new(File::create(path)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Nonconvex,
    StronglyConvex,
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nonconvex" => Ok(Regime::Nonconvex),
            "convex" | "strongly-convex" => Ok(Regime::StronglyConvex),
            other => Err(Error::InvalidParameter(format!("unknown regime `{other}`"))),
        }
    }
}

/// Tree quantities the rates depend on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeSummary {
    pub n: usize,
    pub d_r: usize,
    pub d_c: usize,
    pub r_avg: f64,
    pub c_avg: f64,
}

impl TreeSummary {
    pub fn from_stats(pull: &TreeStats, push: &TreeStats) -> Self {
        Self {
            n: pull.n(),
            d_r: pull.d,
            d_c: push.d,
            r_avg: pull.avg,
            c_avg: push.avg,
        }
    }

    pub fn from_trees(trees: &SpanningTreePair) -> Self {
        Self::from_stats(&tree_stats(&trees.pull), &tree_stats(&trees.push))
    }

    fn check(&self) -> Result<()> {
        if self.n == 0
            || self.d_r == 0
            || self.d_c == 0
            || !(self.r_avg > 0.0)
            || !(self.c_avg > 0.0)
        {
            return Err(Error::InvalidParameter(format!(
                "tree quantities must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    fn max_d(&self) -> f64 {
        self.d_r.max(self.d_c) as f64
    }
}

/// Candidate stepsizes and the chosen minimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepsizeBranches {
    pub branches: Vec<f64>,
    /// Index of the smallest branch (first on ties).
    pub selected: usize,
    pub value: f64,
}

impl StepsizeBranches {
    fn from_branches(branches: Vec<f64>) -> Self {
        let (selected, value) =
            branches
                .iter()
                .copied()
                .enumerate()
                .fold(
                    (0, f64::INFINITY),
                    |best, (i, v)| if v < best.1 { (i, v) } else { best },
                );
        Self {
            branches,
            selected,
            value,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && !v.is_nan() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be positive, got {v}"
        )))
    }
}

/// Nonconvex stepsize:
/// `min{ 1/(100 n sqrt(d_R d_C r c) L), (D/(5 n L s^2 (T+1)))^(1/2),
/// (D/(300 n^2 d_C r c L s^2 (T+1)))^(1/3) }`.
///
/// `sigma = 0` is allowed and sends the noise branches to infinity.
pub fn theoretical_stepsize_nonconvex(
    s: &TreeSummary,
    l: f64,
    sigma: f64,
    delta_f: f64,
    iterations: u64,
) -> Result<StepsizeBranches> {
    s.check()?;
    positive("L", l)?;
    positive("delta_f", delta_f)?;
    if !(sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sigma must be >= 0, got {sigma}"
        )));
    }
    let n = s.n as f64;
    let t1 = iterations as f64 + 1.0;
    let rc = s.r_avg * s.c_avg;
    let s2 = sigma * sigma;
    let first = 1.0 / (100.0 * n * (s.d_r as f64 * s.d_c as f64 * rc).sqrt() * l);
    let second = (delta_f / (5.0 * n * l * s2 * t1)).sqrt();
    let third = (delta_f / (300.0 * n * n * s.d_c as f64 * rc * l * s2 * t1)).cbrt();
    Ok(StepsizeBranches::from_branches(vec![first, second, third]))
}

/// Strongly convex stepsize:
/// `min{ 16 ln(n(T+1)) / (n mu (T+1)), 1/(1000 n max(d_R, d_C) r c kappa L) }`.
pub fn theoretical_stepsize_convex(
    s: &TreeSummary,
    l: f64,
    mu: f64,
    iterations: u64,
) -> Result<StepsizeBranches> {
    s.check()?;
    positive("L", l)?;
    positive("mu", mu)?;
    let n = s.n as f64;
    let t1 = iterations as f64 + 1.0;
    let kappa = l / mu;
    let first = 16.0 * (n * t1).ln() / (n * mu * t1);
    let second = 1.0 / (1000.0 * n * s.max_d() * s.r_avg * s.c_avg * kappa * l);
    Ok(StepsizeBranches::from_branches(vec![first, second]))
}

/// Predicted transient iterations, polylog factors dropped:
/// `n (max(d_R, d_C) r c)^2` (nonconvex) or `max(d_R, d_C) r c` (strongly
/// convex), floored at 1.
pub fn transient_bound(pull: &TreeStats, push: &TreeStats, regime: Regime) -> f64 {
    let n = pull.n() as f64;
    let core = pull.d.max(push.d) as f64 * pull.avg * push.avg;
    let raw = match regime {
        Regime::Nonconvex => n * core * core,
        Regime::StronglyConvex => core,
    };
    raw.max(1.0)
}

/// Inputs and outputs of the theory calculator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub regime: Regime,
    pub family: Option<Family>,
    pub root: usize,
    pub trees: TreeSummary,
    #[serde(rename = "L")]
    pub l: f64,
    pub mu: Option<f64>,
    pub kappa: Option<f64>,
    pub sigma: f64,
    pub delta_f: f64,
    #[serde(rename = "T")]
    pub iterations: u64,
    pub stepsize: StepsizeBranches,
    pub transient_iterations: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryInputs {
    pub regime: Regime,
    pub l: f64,
    pub mu: Option<f64>,
    pub sigma: f64,
    pub delta_f: f64,
    pub iterations: u64,
}

pub fn theory_report(
    g: &DirectedGraph,
    root: usize,
    family: Option<Family>,
    inputs: TheoryInputs,
) -> Result<TheoryReport> {
    let trees = SpanningTreePair::extract(g, root)?;
    let pull = tree_stats(&trees.pull);
    let push = tree_stats(&trees.push);
    let summary = TreeSummary::from_stats(&pull, &push);
    let TheoryInputs {
        regime,
        l,
        mu,
        sigma,
        delta_f,
        iterations,
    } = inputs;
    let stepsize = match regime {
        Regime::Nonconvex => {
            theoretical_stepsize_nonconvex(&summary, l, sigma, delta_f, iterations)?
        }
        Regime::StronglyConvex => {
            let mu = mu
                .ok_or_else(|| Error::InvalidParameter("strongly convex regime needs mu".into()))?;
            theoretical_stepsize_convex(&summary, l, mu, iterations)?
        }
    };
    Ok(TheoryReport {
        regime,
        family,
        root,
        trees: summary,
        l,
        mu,
        kappa: mu.map(|m| l / m),
        sigma,
        delta_f,
        iterations,
        stepsize,
        transient_iterations: transient_bound(&pull, &push, regime),
    })
}

/// One row of an `n` sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    /// First recorded iteration whose averaged `||grad f(x_root)||^2` is
    /// below the threshold.
    pub iterations_to_threshold: Option<u64>,
    /// Averaged `||grad f(x_root)||^2` over the last 10% of recorded rows.
    pub final_grad_norm_sq: f64,
}

/// Re-runs `base` for each `n` (topology and problem resized together).
pub fn sweep_n(base: &ExperimentConfig, ns: &[usize], threshold: f64) -> Result<Vec<SweepRow>> {
    ns.par_iter()
        .map(|&n| {
            let mut cfg = base.clone();
            cfg.topology.n = n;
            let rec = run_experiment(&cfg)?;
            Ok(SweepRow {
                n,
                iterations_to_threshold: rec
                    .mean
                    .iter()
                    .find(|r| r.metrics.grad_norm_sq_root < threshold)
                    .map(|r| r.iter),
                final_grad_norm_sq: rec.tail_grad_norm(0.1),
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> Result<()> {
    writeln!(out, "n,iterations_to_threshold,final_grad_norm_sq")?;
    for r in rows {
        let hit = r
            .iterations_to_threshold
            .map(|v| v.to_string())
            .unwrap_or_default();
        writeln!(out, "{},{},{}", r.n, hit, fmt_float(r.final_grad_norm_sq))?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{gen_directed_ring, SpanningTreePair};

    fn quad_cfg(iterations: u64, reps: usize) -> ExperimentConfig {
        ExperimentConfig {
            topology: TopologySpec {
                family: Family::DiRing,
                n: 4,
                m: None,
                root: None,
            },
            problem: ProblemSpec::Quadratic {
                p: 3,
                mu: 0.5,
                l: 1.0,
                heterogeneity: 1.0,
                sigma: 0.1,
            },
            algorithm: Algorithm::Stpp,
            gamma: 0.05,
            stpp_divide_by_n: false,
            schedule: Schedule::Constant,
            iterations,
            repetitions: reps,
            seed: 3,
            record_every: None,
            x0: None,
            output: None,
        }
    }

    fn chain_summary() -> TreeSummary {
        let trees = SpanningTreePair::extract(&gen_directed_ring(6).unwrap(), 1).unwrap();
        TreeSummary::from_trees(&trees)
    }

    #[test]
    fn decay_schedule() {
        let s = Schedule::Decay {
            factor: 0.8,
            period: 300,
        };
        assert_eq!(s.stepsize_at(0.4, 900), 0.4 * 0.8f64.powi(3));
        assert_eq!(s.stepsize_at(0.4, 299), 0.4);
        assert_eq!(s.stepsize_at(0.4, 300), 0.4 * 0.8);
        assert!(Schedule::Decay {
            factor: 1.5,
            period: 3
        }
        .validate()
        .is_err());
        assert!(Schedule::Decay {
            factor: 0.5,
            period: 0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn zero_iterations_record_one_row() {
        let rec = run_experiment(&quad_cfg(0, 1)).unwrap();
        assert_eq!(rec.series.len(), 1);
        assert_eq!(rec.series[0].len(), 1);
        let mut buf = Vec::new();
        write_csv(&rec, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2);
    }

    #[test]
    fn series_length_and_row_count() {
        let mut cfg = quad_cfg(10, 3);
        let rec = run_experiment(&cfg).unwrap();
        assert!(rec.series.iter().all(|s| s.len() == 11));
        let mut buf = Vec::new();
        write_csv(&rec, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 34);

        cfg.iterations = 25;
        cfg.record_every = Some(10);
        let rec = run_experiment(&cfg).unwrap();
        let iters: Vec<u64> = rec.mean.iter().map(|r| r.iter).collect();
        assert_eq!(iters, vec![0, 10, 20, 25]);
    }

    #[test]
    fn default_record_interval() {
        let mut cfg = quad_cfg(10_000, 1);
        assert_eq!(cfg.record_every(), 1);
        cfg.iterations = 25_000;
        assert_eq!(cfg.record_every(), 3);
    }

    #[test]
    fn csv_round_trips_floats() {
        let rec = run_experiment(&quad_cfg(5, 2)).unwrap();
        let mut buf = Vec::new();
        write_csv(&rec, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        for (line, row) in lines.zip(rec.series.iter().flatten()) {
            let f: Vec<&str> = line.split(',').collect();
            assert_eq!(f[1].parse::<f64>().unwrap(), row.metrics.grad_norm_sq_root);
            assert_eq!(f[2].parse::<f64>().unwrap(), row.metrics.opt_gap.unwrap());
            assert_eq!(f[3].parse::<f64>().unwrap(), row.metrics.consensus_err);
            assert_eq!(f[5].parse::<f64>().unwrap(), row.stepsize);
        }
    }

    #[test]
    fn logistic_leaves_unknown_metrics_empty() {
        let mut cfg = ExperimentConfig::logistic_reference(Algorithm::Dsgd);
        cfg.topology.n = 4;
        cfg.problem = ProblemSpec::Logistic {
            p: 3,
            samples: 5,
            reg: 0.01,
            heterogeneity: 0.2,
            batch: 1,
        };
        cfg.iterations = 2;
        cfg.repetitions = 1;
        let rec = run_experiment(&cfg).unwrap();
        let mut buf = Vec::new();
        write_csv(&rec, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row[2], "");
        assert_eq!(row[4], "");
    }

    #[test]
    fn config_json_round_trip_and_validation() {
        let cfg = ExperimentConfig::logistic_reference(Algorithm::Stpp);
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json_str(&text).unwrap(), cfg);
        let mut bad = cfg.clone();
        bad.repetitions = 0;
        assert!(bad.validate().is_err());
        let mut bad = cfg;
        bad.x0 = Some(vec![0.0; 2]);
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn effective_gamma_convention() {
        let cfg = ExperimentConfig::logistic_reference(Algorithm::Stpp);
        assert_eq!(cfg.effective_gamma(), 0.4 / 20.0);
        let cfg = ExperimentConfig::logistic_reference(Algorithm::Sgp);
        assert_eq!(cfg.effective_gamma(), 0.4);
    }

    #[test]
    fn nonconvex_stepsize_examples() {
        let s = chain_summary();
        let b = theoretical_stepsize_nonconvex(&s, 1.0, 0.0, 1.0, 100).unwrap();
        assert_eq!(b.selected, 0);
        assert_eq!(b.value, 1.0 / (100.0 * 6.0 * (25.0f64 * 6.25).sqrt()));

        // direct evaluation of the three branches for n = 6, d = 5, avg = 2.5
        let b = theoretical_stepsize_nonconvex(&s, 1.0, 1.0, 1.0, 10_000).unwrap();
        let t1: f64 = 10_001.0;
        let expected = [
            1.0 / (100.0 * 6.0 * 12.5),
            (1.0 / (5.0 * 6.0 * t1)).sqrt(),
            (1.0 / (300.0 * 36.0 * 5.0 * 6.25 * t1)).cbrt(),
        ];
        for (got, want) in b.branches.iter().zip(expected) {
            assert!((got - want).abs() <= 1e-15 * want);
        }
        assert_eq!(
            b.value,
            expected.iter().copied().fold(f64::INFINITY, f64::min)
        );

        let longer = theoretical_stepsize_nonconvex(&s, 1.0, 1.0, 1.0, 20_000).unwrap();
        assert!(longer.value <= b.value);
        assert!(theoretical_stepsize_nonconvex(&s, 0.0, 1.0, 1.0, 10).is_err());
    }

    #[test]
    fn convex_stepsize_examples() {
        let s = chain_summary();
        let b = theoretical_stepsize_convex(&s, 1.0, 0.1, 10_000).unwrap();
        let t1: f64 = 10_001.0;
        let first = 16.0 * (6.0 * t1).ln() / (6.0 * 0.1 * t1);
        let second = 1.0 / (1000.0 * 6.0 * 5.0 * 6.25 * 10.0);
        assert!((b.branches[0] - first).abs() <= 1e-15 * first);
        assert!((b.branches[1] - second).abs() <= 1e-15 * second);
        assert_eq!(b.selected, 1);
        let late = theoretical_stepsize_convex(&s, 1.0, 0.1, 1 << 40).unwrap();
        assert_eq!(late.selected, 0);
        assert!(theoretical_stepsize_convex(&s, 1.0, 0.0, 10).is_err());
    }

    #[test]
    fn branch_ties_pick_first() {
        let b = StepsizeBranches::from_branches(vec![0.5, 0.5]);
        assert_eq!((b.selected, b.value), (0, 0.5));
    }

    #[test]
    fn theory_report_for_ring() {
        let g = gen_directed_ring(6).unwrap();
        let inputs = TheoryInputs {
            regime: Regime::StronglyConvex,
            l: 1.0,
            mu: Some(0.1),
            sigma: 1.0,
            delta_f: 1.0,
            iterations: 1000,
        };
        let rep = theory_report(&g, 1, Some(Family::DiRing), inputs).unwrap();
        assert_eq!(rep.kappa, Some(10.0));
        assert_eq!(rep.transient_iterations, 5.0 * 2.5 * 2.5);
        assert!(rep.stepsize.value > 0.0);
        let missing_mu = TheoryInputs { mu: None, ..inputs };
        assert!(theory_report(&g, 1, None, missing_mu).is_err());
    }

    #[test]
    fn single_n_sweep_matches_run() {
        let cfg = quad_cfg(20, 2);
        let rows = sweep_n(&cfg, &[4], 1e9).unwrap();
        let rec = run_experiment(&cfg).unwrap();
        assert_eq!(rows[0].final_grad_norm_sq, rec.tail_grad_norm(0.1));
        assert_eq!(rows[0].iterations_to_threshold, Some(0));
    }
}

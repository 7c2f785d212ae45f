//! Synchronous-round decentralized optimizers.
//!
//! One communication round is one application of a mixing matrix to the
//! stacked `n x p` agent state. Stochastic gradients for iteration `t` are
//! drawn with key `(seed, agent, t)` after the new iterate is formed, so any
//! two algorithms run with the same seed see the same noise stream.
//!
//! Tracker updates are evaluated as `(mix(Y) - G) + G'`. With a single agent
//! the first difference is exactly zero, which keeps every method
//! bit-identical to plain SGD at `n = 1`.

use ndarray::{Array1, Array2, ArrayView1, Zip};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixing::{gossip_weights, uniform_column_weights, MixingKind, MixingMatrix, TreeMatrix};
use crate::oracles::{stochastic_gradient, Oracle};
use crate::topology::{DirectedGraph, Orientation, SpanningTreePair};

// below this many entries per step, sampling stays on the calling thread
const PARALLEL_THRESHOLD: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Stpp,
    Dsgd,
    Dsgt,
    Sgp,
    PushDiging,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Stpp,
        Algorithm::Dsgd,
        Algorithm::Dsgt,
        Algorithm::Sgp,
        Algorithm::PushDiging,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Stpp => "stpp",
            Algorithm::Dsgd => "dsgd",
            Algorithm::Dsgt => "dsgt",
            Algorithm::Sgp => "sgp",
            Algorithm::PushDiging => "push-diging",
        }
    }

    fn tracks(self) -> bool {
        matches!(
            self,
            Algorithm::Stpp | Algorithm::Dsgt | Algorithm::PushDiging
        )
    }

    fn push_sum(self) -> bool {
        matches!(self, Algorithm::Sgp | Algorithm::PushDiging)
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown algorithm `{s}`")))
    }
}

/// Stacked agent state; row `i` belongs to agent `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState {
    /// Parameters (de-biased for push-sum methods).
    pub x: Array2<f64>,
    /// Gradient trackers, for tracking methods.
    pub y: Option<Array2<f64>>,
    /// Stochastic gradients drawn at the current `x`.
    pub g: Array2<f64>,
    /// Push-sum numerators and weights, for push-sum methods.
    pub push_sum: Option<PushSum>,
    /// Completed iterations.
    pub t: u64,
    /// Seed of the gradient noise stream.
    pub seed: u64,
    /// Row reported as the output agent (0-based).
    pub root: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PushSum {
    pub z: Array2<f64>,
    pub w: Array1<f64>,
}

impl SwarmState {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn tracker(&self) -> Result<&Array2<f64>> {
        self.y
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("state has no gradient tracker".into()))
    }
}

/// Draws one stochastic gradient per agent at the rows of `x`.
pub fn sample_gradients<O: Oracle + ?Sized>(
    oracle: &O,
    x: &Array2<f64>,
    seed: u64,
    t: u64,
) -> Array2<f64> {
    let (n, p) = x.dim();
    let draw = |i: usize| stochastic_gradient(oracle, i, x.row(i), seed, t).value;
    let rows: Vec<Array1<f64>> = if n * p >= PARALLEL_THRESHOLD && n > 1 {
        (0..n).into_par_iter().map(draw).collect()
    } else {
        (0..n).map(draw).collect()
    };
    let mut out = Array2::zeros((n, p));
    for (mut dst, src) in out.outer_iter_mut().zip(&rows) {
        dst.assign(src);
    }
    out
}

/// Initial state for `alg`: identical rows `x0`, one gradient per agent drawn
/// at iteration 0, trackers equal to those gradients, push-sum weights one.
pub fn init_state<O: Oracle + ?Sized>(
    alg: Algorithm,
    oracle: &O,
    x0: ArrayView1<'_, f64>,
    seed: u64,
    root: usize,
) -> Result<SwarmState> {
    let n = oracle.agents();
    if x0.len() != oracle.dim() {
        return Err(Error::DimensionMismatch(format!(
            "x0 has length {}, problem dimension is {}",
            x0.len(),
            oracle.dim()
        )));
    }
    if root >= n {
        return Err(Error::NodeOutOfRange { node: root + 1, n });
    }
    let x = Array2::from_shape_fn((n, x0.len()), |(_, j)| x0[j]);
    let g = sample_gradients(oracle, &x, seed, 0);
    Ok(SwarmState {
        y: alg.tracks().then(|| g.clone()),
        push_sum: alg.push_sum().then(|| PushSum {
            z: x.clone(),
            w: Array1::ones(n),
        }),
        x,
        g,
        t: 0,
        seed,
        root,
    })
}

/// STPP initialization (output agent at row 0).
pub fn stpp_init<O: Oracle + ?Sized>(
    oracle: &O,
    x0: ArrayView1<'_, f64>,
    seed: u64,
) -> Result<SwarmState> {
    init_state(Algorithm::Stpp, oracle, x0, seed, 0)
}

/// Gather plan for the 0/1 tree matrices: who each agent pulls from and
/// which agents push into it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreePlan {
    /// `parent[i]`: the single column holding a 1 in row `i` of `R`.
    pub parent: Vec<usize>,
    /// `sources[i]`: ascending columns holding a 1 in row `i` of `C`.
    pub sources: Vec<Vec<usize>>,
    pub root: usize,
}

impl TreePlan {
    pub fn new(r: &TreeMatrix, c: &TreeMatrix) -> Result<Self> {
        if r.orientation() != Orientation::Pull || c.orientation() != Orientation::Push {
            return Err(Error::WrongOrientation {
                expected: "pull/push",
                found: "swapped or repeated",
            });
        }
        if r.n() != c.n() {
            return Err(Error::DimensionMismatch(format!(
                "R is {}x{0}, C is {}x{1}",
                r.n(),
                c.n()
            )));
        }
        if r.root() != c.root() {
            return Err(Error::InvalidParameter(format!(
                "pull root {} differs from push root {}",
                r.root(),
                c.root()
            )));
        }
        let parent = r
            .entries()
            .rows()
            .into_iter()
            .map(|row| {
                let ones: Vec<usize> = row
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v == 1)
                    .map(|(j, _)| j)
                    .collect();
                match ones.as_slice() {
                    [j] if row.sum() == 1 => Ok(*j),
                    _ => Err(Error::KindMismatch {
                        expected: "0/1 row-stochastic",
                        found: "row without a single 1",
                    }),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        if c.entries()
            .columns()
            .into_iter()
            .any(|col| col.sum() != 1 || col.iter().any(|&v| v != 0 && v != 1))
        {
            return Err(Error::KindMismatch {
                expected: "0/1 column-stochastic",
                found: "column without a single 1",
            });
        }
        let sources = c
            .entries()
            .rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &v)| v == 1)
                    .map(|(j, _)| j)
                    .collect()
            })
            .collect();
        Ok(Self {
            parent,
            sources,
            root: r.root() - 1,
        })
    }
}

/// Everything a run needs to step one algorithm.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Stpp {
        r: TreeMatrix,
        c: TreeMatrix,
        plan: TreePlan,
    },
    Dsgd(MixingMatrix),
    Dsgt(MixingMatrix),
    Sgp(MixingMatrix),
    PushDiging(MixingMatrix),
}

impl Optimizer {
    /// Builds the default weights for `alg` on `g`: pull/push trees rooted at
    /// `root` for STPP, [`gossip_weights`] for DSGD/DSGT and
    /// [`uniform_column_weights`] for the push-sum methods.
    pub fn for_graph(alg: Algorithm, g: &DirectedGraph, root: usize) -> Result<Self> {
        Ok(match alg {
            Algorithm::Stpp => {
                let trees = SpanningTreePair::extract(g, root)?;
                Self::stpp(
                    crate::mixing::build_pull_matrix(&trees.pull)?,
                    crate::mixing::build_push_matrix(&trees.push)?,
                )?
            }
            Algorithm::Dsgd => Optimizer::Dsgd(gossip_weights(g)?),
            Algorithm::Dsgt => Optimizer::Dsgt(gossip_weights(g)?),
            Algorithm::Sgp => Optimizer::Sgp(uniform_column_weights(g)?),
            Algorithm::PushDiging => Optimizer::PushDiging(uniform_column_weights(g)?),
        })
    }

    pub fn stpp(r: TreeMatrix, c: TreeMatrix) -> Result<Self> {
        let plan = TreePlan::new(&r, &c)?;
        Ok(Optimizer::Stpp { r, c, plan })
    }

    pub fn algorithm(&self) -> Algorithm {
        match self {
            Optimizer::Stpp { .. } => Algorithm::Stpp,
            Optimizer::Dsgd(_) => Algorithm::Dsgd,
            Optimizer::Dsgt(_) => Algorithm::Dsgt,
            Optimizer::Sgp(_) => Algorithm::Sgp,
            Optimizer::PushDiging(_) => Algorithm::PushDiging,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Optimizer::Stpp { r, .. } => r.n(),
            Optimizer::Dsgd(w)
            | Optimizer::Dsgt(w)
            | Optimizer::Sgp(w)
            | Optimizer::PushDiging(w) => w.n(),
        }
    }

    /// Output agent row: the tree root for STPP, agent 0 otherwise.
    pub fn default_root(&self) -> usize {
        match self {
            Optimizer::Stpp { plan, .. } => plan.root,
            _ => 0,
        }
    }

    pub fn init<O: Oracle + ?Sized>(
        &self,
        oracle: &O,
        x0: ArrayView1<'_, f64>,
        seed: u64,
        root: usize,
    ) -> Result<SwarmState> {
        if oracle.agents() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "problem has {} agents, weights are {}x{1}",
                oracle.agents(),
                self.n()
            )));
        }
        init_state(self.algorithm(), oracle, x0, seed, root)
    }

    pub fn step<O: Oracle + ?Sized>(
        &self,
        state: &mut SwarmState,
        gamma: f64,
        oracle: &O,
    ) -> Result<()> {
        match self {
            Optimizer::Stpp { plan, .. } => stpp_step(state, plan, gamma, oracle),
            Optimizer::Dsgd(w) => dsgd_step(state, w, gamma, oracle),
            Optimizer::Dsgt(w) => dsgt_step(state, w, gamma, oracle),
            Optimizer::Sgp(a) => sgp_step(state, a, gamma, oracle),
            Optimizer::PushDiging(a) => pushdiging_step(state, a, gamma, oracle),
        }
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma >= 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "stepsize must be finite and >= 0, got {gamma}"
        )))
    }
}

fn check_dims(state: &SwarmState, n: usize, p: usize) -> Result<()> {
    if state.x.dim() != (n, p) || state.g.dim() != (n, p) {
        return Err(Error::DimensionMismatch(format!(
            "state is {:?}, expected {n}x{p}",
            state.x.dim()
        )));
    }
    if state.y.as_ref().is_some_and(|y| y.dim() != (n, p)) {
        return Err(Error::DimensionMismatch("tracker shape".into()));
    }
    Ok(())
}

/// `W M` with a fixed left-to-right accumulation order starting from `0.0`.
pub fn mix(w: &Array2<f64>, m: &Array2<f64>) -> Array2<f64> {
    let (n, k) = w.dim();
    let p = m.ncols();
    assert_eq!(k, m.nrows(), "inner dimensions differ");
    let mut out = Array2::zeros((n, p));
    for i in 0..n {
        let mut row = out.row_mut(i);
        for j in 0..k {
            let wij = w[[i, j]];
            if wij == 0.0 {
                continue;
            }
            row.scaled_add(wij, &m.row(j));
        }
    }
    out
}

// x - gamma * y, row-wise
fn descend(x: &Array2<f64>, y: &Array2<f64>, gamma: f64) -> Array2<f64> {
    let mut out = x.clone();
    Zip::from(&mut out).and(y).for_each(|a, &b| *a -= gamma * b);
    out
}

// (mixed - g_old) + g_new
fn track(mixed: Array2<f64>, g_old: &Array2<f64>, g_new: &Array2<f64>) -> Array2<f64> {
    let mut out = mixed;
    Zip::from(&mut out)
        .and(g_old)
        .and(g_new)
        .for_each(|y, &old, &new| *y = (*y - old) + new);
    out
}

/// One STPP round using per-agent gathers.
///
/// Agent `i` pulls `x_j - gamma y_j` from its parent `j`, sums the trackers
/// pushed to it, then draws a fresh gradient at its new iterate.
pub fn stpp_step<O: Oracle + ?Sized>(
    state: &mut SwarmState,
    plan: &TreePlan,
    gamma: f64,
    oracle: &O,
) -> Result<()> {
    check_gamma(gamma)?;
    let n = plan.parent.len();
    check_dims(state, n, oracle.dim())?;
    let y = state.tracker()?;
    let mut x_next = Array2::zeros(state.x.raw_dim());
    let mut y_pushed = Array2::zeros(state.x.raw_dim());
    for i in 0..n {
        let j = plan.parent[i];
        let mut row = x_next.row_mut(i);
        Zip::from(&mut row)
            .and(state.x.row(j))
            .and(y.row(j))
            .for_each(|dst, &xj, &yj| *dst = 0.0 + (xj - gamma * yj));
        let mut acc = y_pushed.row_mut(i);
        for &src in &plan.sources[i] {
            acc += &y.row(src);
        }
    }
    finish_tracking_step(state, x_next, y_pushed, oracle);
    Ok(())
}

/// Reference STPP round in matrix form: `X' = R (X - gamma Y)`,
/// `Y' = C Y + G' - G`. Produces the same bits as [`stpp_step`].
pub fn stpp_step_dense<O: Oracle + ?Sized>(
    state: &mut SwarmState,
    r: &TreeMatrix,
    c: &TreeMatrix,
    gamma: f64,
    oracle: &O,
) -> Result<()> {
    check_gamma(gamma)?;
    TreePlan::new(r, c)?;
    check_dims(state, r.n(), oracle.dim())?;
    let y = state.tracker()?;
    let rf = r.to_mixing();
    let cf = c.to_mixing();
    let x_next = mix(rf.weights(), &descend(&state.x, y, gamma));
    let y_pushed = mix(cf.weights(), y);
    finish_tracking_step(state, x_next, y_pushed, oracle);
    Ok(())
}

fn finish_tracking_step<O: Oracle + ?Sized>(
    state: &mut SwarmState,
    x_next: Array2<f64>,
    y_mixed: Array2<f64>,
    oracle: &O,
) {
    let t = state.t + 1;
    let g_next = sample_gradients(oracle, &x_next, state.seed, t);
    state.y = Some(track(y_mixed, &state.g, &g_next));
    state.x = x_next;
    state.g = g_next;
    state.t = t;
}

/// DSGD: `X' = W (X - gamma G)`. Accepts doubly stochastic weights, or
/// row-stochastic weights on digraphs where no doubly stochastic choice is
/// readily available.
pub fn dsgd_step<O: Oracle + ?Sized>(
    state: &mut SwarmState,
    w: &MixingMatrix,
    gamma: f64,
    oracle: &O,
) -> Result<()> {
    check_gamma(gamma)?;
    if !w.kind().is_row_stochastic() {
        return Err(Error::KindMismatch {
            expected: "doubly- or row-stochastic",
            found: w.kind().name(),
        });
    }
    check_dims(state, w.n(), oracle.dim())?;
    let x_next = mix(w.weights(), &descend(&state.x, &state.g, gamma));
    let t = state.t + 1;
    state.g = sample_gradients(oracle, &x_next, state.seed, t);
    state.x = x_next;
    state.t = t;
    Ok(())
}

/// DSGT: `X' = W (X - gamma Y)`, `Y' = W Y + G' - G` with doubly stochastic `W`.
pub fn dsgt_step<O: Oracle + ?Sized>(
    state: &mut SwarmState,
    w: &MixingMatrix,
    gamma: f64,
    oracle: &O,
) -> Result<()> {
    check_gamma(gamma)?;
    if w.kind() != MixingKind::Doubly {
        return Err(Error::KindMismatch {
            expected: "doubly-stochastic",
            found: w.kind().name(),
        });
    }
    check_dims(state, w.n(), oracle.dim())?;
    let y = state.tracker()?;
    let x_next = mix(w.weights(), &descend(&state.x, y, gamma));
    let y_mixed = mix(w.weights(), y);
    finish_tracking_step(state, x_next, y_mixed, oracle);
    Ok(())
}

fn push_sum_parts<'a>(state: &'a SwarmState, a: &MixingMatrix) -> Result<&'a PushSum> {
    if !a.kind().is_column_stochastic() {
        return Err(Error::KindMismatch {
            expected: "column-stochastic",
            found: a.kind().name(),
        });
    }
    let ps = state
        .push_sum
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("state has no push-sum weights".into()))?;
    if ps.w.len() != a.n() || ps.z.dim() != state.x.dim() {
        return Err(Error::DimensionMismatch("push-sum state shape".into()));
    }
    if let Some((agent, &value)) = ps.w.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(Error::NonPositiveWeight { agent, value });
    }
    Ok(ps)
}

// z' = A z_pre, w' = A w, x' = z' / w'
fn push_sum_mix(a: &MixingMatrix, z_pre: &Array2<f64>, w: &Array1<f64>) -> Result<PushSum> {
    let z = mix(a.weights(), z_pre);
    let w_next = Array1::from_iter(a.weights().rows().into_iter().map(|row| {
        row.iter().zip(w).fold(
            0.0,
            |acc, (&aij, &wj)| if aij == 0.0 { acc } else { acc + aij * wj },
        )
    }));
    if let Some((agent, &value)) = w_next.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(Error::NonPositiveWeight { agent, value });
    }
    Ok(PushSum { z, w: w_next })
}

fn debias(ps: &PushSum) -> Array2<f64> {
    let mut x = ps.z.clone();
    for (mut row, &wi) in x.outer_iter_mut().zip(&ps.w) {
        row.mapv_inplace(|v| v / wi);
    }
    x
}

/// Stochastic gradient push: `Z' = A (Z - gamma G)`, `w' = A w`,
/// `x_i = z_i / w_i`, gradients evaluated at the de-biased iterates.
pub fn sgp_step<O: Oracle + ?Sized>(
    state: &mut SwarmState,
    a: &MixingMatrix,
    gamma: f64,
    oracle: &O,
) -> Result<()> {
    check_gamma(gamma)?;
    check_dims(state, a.n(), oracle.dim())?;
    let ps = push_sum_parts(state, a)?;
    let next = push_sum_mix(a, &descend(&ps.z, &state.g, gamma), &ps.w)?;
    let x_next = debias(&next);
    let t = state.t + 1;
    state.g = sample_gradients(oracle, &x_next, state.seed, t);
    state.x = x_next;
    state.push_sum = Some(next);
    state.t = t;
    Ok(())
}

/// Push-DIGing: `Z' = A (Z - gamma Y)`, `w' = A w`, `x_i = z_i / w_i`,
/// `Y' = A Y + G' - G`.
pub fn pushdiging_step<O: Oracle + ?Sized>(
    state: &mut SwarmState,
    a: &MixingMatrix,
    gamma: f64,
    oracle: &O,
) -> Result<()> {
    check_gamma(gamma)?;
    check_dims(state, a.n(), oracle.dim())?;
    let ps = push_sum_parts(state, a)?;
    let y = state.tracker()?;
    let next = push_sum_mix(a, &descend(&ps.z, y, gamma), &ps.w)?;
    let y_mixed = mix(a.weights(), y);
    let x_next = debias(&next);
    state.push_sum = Some(next);
    finish_tracking_step(state, x_next, y_mixed, oracle);
    Ok(())
}

/// Per-iteration diagnostics, all evaluated with exact gradients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    /// `||grad f(x_root)||^2`.
    pub grad_norm_sq_root: f64,
    /// `||x_root - x*||^2` when the minimizer is known.
    pub opt_gap: Option<f64>,
    /// `||X - 1 x_root^T||_F^2`.
    pub consensus_err: f64,
    /// `f(x_root) - f*` when the optimal value is known.
    pub fval_gap: Option<f64>,
}

pub fn metrics<O: Oracle + ?Sized>(state: &SwarmState, oracle: &O) -> MetricRow {
    let xr = state.x.row(state.root);
    let grad = oracle.gradient(xr);
    let consensus_err = state
        .x
        .outer_iter()
        .map(|row| {
            row.iter()
                .zip(xr)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum();
    MetricRow {
        grad_norm_sq_root: grad.dot(&grad),
        opt_gap: oracle.minimizer().map(|xs| {
            let d = &xr - xs;
            d.dot(&d)
        }),
        consensus_err,
        fval_gap: oracle.optimal_value().map(|fs| oracle.value(xr) - fs),
    }
}

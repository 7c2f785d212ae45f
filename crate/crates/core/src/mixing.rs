//! Mixing matrices.
//!
//! The pull matrix `R` and push matrix `C` are exact 0/1 integer matrices built
//! from spanning trees. `R` is row-stochastic: row `i` holds a single 1 at the
//! parent of `i` (the root points to itself). `C` is column-stochastic: column
//! `j` holds a single 1 at the child of `j`. Powers of both have a closed form
//! in terms of tree distances, exposed by [`indicator_power`].
//!
//! Baseline gossip methods use floating-point weights instead, see
//! [`metropolis_weights`], [`uniform_column_weights`] and
//! [`uniform_row_weights`].

use std::io::Write;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::{DirectedGraph, Orientation, SpanningTree};

const SUM_TOL: f64 = 1e-12;

/// Stochasticity of a weight matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixingKind {
    Row,
    Column,
    Doubly,
}

impl MixingKind {
    pub fn name(self) -> &'static str {
        match self {
            MixingKind::Row => "row-stochastic",
            MixingKind::Column => "column-stochastic",
            MixingKind::Doubly => "doubly-stochastic",
        }
    }

    pub fn is_row_stochastic(self) -> bool {
        matches!(self, MixingKind::Row | MixingKind::Doubly)
    }

    pub fn is_column_stochastic(self) -> bool {
        matches!(self, MixingKind::Column | MixingKind::Doubly)
    }
}

/// Dense nonnegative weight matrix tagged with its stochasticity.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    weights: Array2<f64>,
    kind: MixingKind,
}

impl MixingMatrix {
    /// Wraps `weights`, checking nonnegativity and the row/column sums the
    /// `kind` promises (tolerance 1e-12).
    pub fn new(weights: Array2<f64>, kind: MixingKind) -> Result<Self> {
        let (rows, cols) = weights.dim();
        if rows != cols {
            return Err(Error::DimensionMismatch(format!(
                "mixing matrix must be square, got {rows}x{cols}"
            )));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::InvalidParameter(
                "mixing weights must be nonnegative".into(),
            ));
        }
        let m = Self { weights, kind };
        if kind.is_row_stochastic() && !m.rows_sum_to_one() {
            return Err(Error::KindMismatch {
                expected: "row-stochastic",
                found: "rows not summing to 1",
            });
        }
        if kind.is_column_stochastic() && !m.columns_sum_to_one() {
            return Err(Error::KindMismatch {
                expected: "column-stochastic",
                found: "columns not summing to 1",
            });
        }
        Ok(m)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            weights: Array2::eye(n),
            kind: MixingKind::Doubly,
        }
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    pub fn kind(&self) -> MixingKind {
        self.kind
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn rows_sum_to_one(&self) -> bool {
        self.weights
            .rows()
            .into_iter()
            .all(|r| (r.sum() - 1.0).abs() <= SUM_TOL)
    }

    pub fn columns_sum_to_one(&self) -> bool {
        self.weights
            .columns()
            .into_iter()
            .all(|c| (c.sum() - 1.0).abs() <= SUM_TOL)
    }

    /// True when every off-diagonal nonzero `(i, j)` is a graph edge `(j, i)`.
    pub fn respects(&self, g: &DirectedGraph) -> bool {
        self.weights
            .indexed_iter()
            .all(|((i, j), &w)| i == j || w == 0.0 || g.has_edge(j + 1, i + 1))
    }

    /// Re-tags the matrix if it turns out to also be stochastic the other way.
    fn promote(mut self) -> Self {
        if self.rows_sum_to_one() && self.columns_sum_to_one() {
            self.kind = MixingKind::Doubly;
        }
        self
    }
}

/// Exact 0/1 matrix built from a spanning tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeMatrix {
    entries: Array2<i64>,
    orientation: Orientation,
    root: usize,
}

impl TreeMatrix {
    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Array2<i64> {
        &self.entries
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    /// 1-based root of the source tree.
    pub fn root(&self) -> usize {
        self.root
    }

    pub fn kind(&self) -> MixingKind {
        match self.orientation {
            Orientation::Pull => MixingKind::Row,
            Orientation::Push => MixingKind::Column,
        }
    }

    /// Exact integer power by repeated multiplication; `power(0)` is `I`.
    pub fn power(&self, k: usize) -> Array2<i64> {
        let mut acc = Array2::eye(self.n());
        for _ in 0..k {
            acc = int_matmul(&acc, &self.entries);
        }
        acc
    }

    pub fn to_mixing(&self) -> MixingMatrix {
        MixingMatrix {
            weights: self.entries.mapv(|v| v as f64),
            kind: self.kind(),
        }
    }

    /// The rank-one limit: `1 e_root^T` for pull, `e_root 1^T` for push.
    pub fn limit(&self) -> Array2<i64> {
        let n = self.n();
        let r = self.root - 1;
        Array2::from_shape_fn((n, n), |(i, j)| match self.orientation {
            Orientation::Pull => i64::from(j == r),
            Orientation::Push => i64::from(i == r),
        })
    }
}

/// Plain triple-loop integer product.
pub fn int_matmul(a: &Array2<i64>, b: &Array2<i64>) -> Array2<i64> {
    let (n, m) = a.dim();
    let p = b.ncols();
    assert_eq!(m, b.nrows(), "inner dimensions differ");
    let mut out = Array2::zeros((n, p));
    for i in 0..n {
        for l in 0..m {
            let a_il = a[[i, l]];
            if a_il == 0 {
                continue;
            }
            for j in 0..p {
                out[[i, j]] += a_il * b[[l, j]];
            }
        }
    }
    out
}

/// Pull matrix: `R[i, j] = 1` iff `j` is the parent of `i`, or `i = j = root`.
pub fn build_pull_matrix(t: &SpanningTree) -> Result<TreeMatrix> {
    tree_matrix(t, Orientation::Pull)
}

/// Push matrix: `C[i, j] = 1` iff `i` is the child of `j`, or `i = j = root`.
pub fn build_push_matrix(t: &SpanningTree) -> Result<TreeMatrix> {
    tree_matrix(t, Orientation::Push)
}

fn tree_matrix(t: &SpanningTree, want: Orientation) -> Result<TreeMatrix> {
    if t.orientation() != want {
        return Err(Error::WrongOrientation {
            expected: want.name(),
            found: t.orientation().name(),
        });
    }
    let n = t.n();
    let r = t.root() - 1;
    let mut entries = Array2::zeros((n, n));
    for (node, link) in t.links0().iter().enumerate() {
        let other = link.unwrap_or(r);
        match want {
            Orientation::Pull => entries[[node, other]] = 1,
            Orientation::Push => entries[[other, node]] = 1,
        }
    }
    Ok(TreeMatrix {
        entries,
        orientation: want,
        root: t.root(),
    })
}

/// Distance-indicator matrix `Z_k` of a tree.
///
/// Column `root` marks every node within distance `k` of the root; column
/// `j != root` marks the nodes exactly `k` links below `j` (following links
/// backwards). For a pull tree `R^k = Z_k`; for a push tree `C^k = Z_k^T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndicatorPowers {
    pub k: usize,
    pub z: Array2<i64>,
    pub orientation: Orientation,
}

impl IndicatorPowers {
    /// The matrix power this indicator predicts (`Z_k` or `Z_k^T`).
    pub fn predicted_power(&self) -> Array2<i64> {
        match self.orientation {
            Orientation::Pull => self.z.clone(),
            Orientation::Push => self.z.t().to_owned(),
        }
    }
}

/// Builds `Z_k` from tree depths and ancestry alone, without multiplying
/// matrices.
pub fn indicator_power(t: &SpanningTree, k: usize) -> IndicatorPowers {
    let n = t.n();
    let r = t.root() - 1;
    let depth = t.depths();
    let links = t.links0();
    let is_ancestor = |anc: usize, mut node: usize| loop {
        if node == anc {
            return true;
        }
        match links[node] {
            Some(next) => node = next,
            None => return false,
        }
    };
    let z = Array2::from_shape_fn((n, n), |(i, j)| {
        let hit = if j == r {
            depth[i] <= k
        } else {
            depth[i] == depth[j] + k && is_ancestor(j, i)
        };
        i64::from(hit)
    });
    IndicatorPowers {
        k,
        z,
        orientation: t.orientation(),
    }
}

/// Left Perron vector of `R` and right Perron vector of `C`. Both equal the
/// basis vector at the shared root; the fixed-point identities are verified.
pub fn stationary_vectors(r: &TreeMatrix, c: &TreeMatrix) -> Result<(Array1<f64>, Array1<f64>)> {
    if r.orientation() != Orientation::Pull || c.orientation() != Orientation::Push {
        return Err(Error::WrongOrientation {
            expected: "pull/push",
            found: "swapped or repeated",
        });
    }
    if r.n() != c.n() {
        return Err(Error::DimensionMismatch(format!(
            "R is {0}x{0}, C is {1}x{1}",
            r.n(),
            c.n()
        )));
    }
    if r.root() != c.root() {
        return Err(Error::FixedPoint(format!(
            "trees rooted at {} and {}",
            r.root(),
            c.root()
        )));
    }
    let n = r.n();
    let mut pi = Array1::<i64>::zeros(n);
    pi[r.root() - 1] = 1;
    if pi.dot(r.entries()) != pi {
        return Err(Error::FixedPoint("pi_R^T R != pi_R^T".into()));
    }
    if c.entries().dot(&pi) != pi {
        return Err(Error::FixedPoint("C pi_C != pi_C".into()));
    }
    let pi = pi.mapv(|v| v as f64);
    Ok((pi.clone(), pi))
}

/// Spectral norm by power iteration on `M^T M`, run to near machine precision.
pub fn spectral_norm(m: &Array2<f64>) -> f64 {
    power_iteration_norm(m, 20_000, 1e-15)
}

/// Power iteration on `M^T M` with an iteration cap and relative tolerance
/// on successive Rayleigh quotients. Approaches the norm from below.
pub fn power_iteration_norm(m: &Array2<f64>, max_iter: usize, rel_tol: f64) -> f64 {
    let n = m.ncols();
    if n == 0 || m.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    let gram = m.t().dot(m);
    // fixed, uneven start vector
    let mut v = Array1::from_shape_fn(n, |i| 1.0 + 0.37 * ((i * 7919 % 101) as f64 / 101.0));
    v /= v.dot(&v).sqrt();
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let w = gram.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next = w.dot(&v);
        v = w / norm;
        let done = (next - lambda).abs() <= rel_tol * next.abs();
        lambda = next;
        if done {
            break;
        }
    }
    lambda.max(0.0).sqrt()
}

/// `||M^k - limit||_2` for a tree matrix: `R^k - 1 pi_R^T` or `C^k - pi_C 1^T`.
pub fn spectral_norm_defect(t: &TreeMatrix, k: usize) -> f64 {
    let diff = (t.power(k) - t.limit()).mapv(|v| v as f64);
    spectral_norm(&diff)
}

/// Metropolis-Hastings weights on a symmetric graph.
pub fn metropolis_weights(g: &DirectedGraph) -> Result<MixingMatrix> {
    if let Some((from, to)) = g.first_unreversed_edge() {
        return Err(Error::Asymmetric { from, to });
    }
    let n = g.n();
    let mut w = Array2::zeros((n, n));
    for i in 1..=n {
        for j in g.out_neighbors(i) {
            let deg = g.out_degree(i).max(g.out_degree(j));
            w[[i - 1, j - 1]] = 1.0 / (1.0 + deg as f64);
        }
    }
    for i in 0..n {
        let off: f64 = w.row(i).sum();
        w[[i, i]] = 1.0 - off;
    }
    MixingMatrix::new(w, MixingKind::Doubly)
}

/// Column `j` spreads unit mass evenly over `j` and its out-neighbors.
pub fn uniform_column_weights(g: &DirectedGraph) -> Result<MixingMatrix> {
    let n = g.n();
    let mut w = Array2::zeros((n, n));
    for j in 1..=n {
        let share = 1.0 / (g.out_degree(j) + 1) as f64;
        w[[j - 1, j - 1]] = share;
        for i in g.out_neighbors(j) {
            w[[i - 1, j - 1]] = share;
        }
    }
    Ok(MixingMatrix::new(w, MixingKind::Column)?.promote())
}

/// Row `i` averages `i` and its in-neighbors evenly.
pub fn uniform_row_weights(g: &DirectedGraph) -> Result<MixingMatrix> {
    let n = g.n();
    let mut w = Array2::zeros((n, n));
    for i in 1..=n {
        let share = 1.0 / (g.in_degree(i) + 1) as f64;
        w[[i - 1, i - 1]] = share;
        for j in g.in_neighbors(i) {
            w[[i - 1, j - 1]] = share;
        }
    }
    Ok(MixingMatrix::new(w, MixingKind::Row)?.promote())
}

/// Gossip weights for DSGD/DSGT: Metropolis on symmetric graphs, uniform
/// in-neighbor averaging otherwise (doubly stochastic on regular digraphs,
/// row-stochastic in general).
pub fn gossip_weights(g: &DirectedGraph) -> Result<MixingMatrix> {
    if g.is_symmetric() {
        metropolis_weights(g)
    } else {
        uniform_row_weights(g)
    }
}

/// Writes a tree matrix in Matrix Market coordinate format (1-based).
pub fn write_matrix_market<W: Write>(mut out: W, m: &TreeMatrix) -> Result<()> {
    let nnz = m.entries().iter().filter(|&&v| v != 0).count();
    writeln!(out, "%%MatrixMarket matrix coordinate integer general")?;
    writeln!(
        out,
        "% {} matrix, root {}",
        m.orientation().name(),
        m.root()
    )?;
    writeln!(out, "{} {} {}", m.n(), m.n(), nnz)?;
    for ((i, j), &v) in m.entries().indexed_iter() {
        if v != 0 {
            writeln!(out, "{} {} {}", i + 1, j + 1, v)?;
        }
    }
    Ok(())
}

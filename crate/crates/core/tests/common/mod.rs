#![allow(dead_code)]

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use stpp::oracles::Oracle;
use stpp::topology::DirectedGraph;

/// Random strongly connected digraph: a shuffled Hamiltonian cycle plus
/// independent extra edges with probability `density`.
pub fn random_strong_digraph<R: Rng>(rng: &mut R, n: usize, density: f64) -> DirectedGraph {
    let mut order: Vec<usize> = (1..=n).collect();
    order.shuffle(rng);
    let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (order[i], order[(i + 1) % n])).collect();
    for i in 1..=n {
        for j in 1..=n {
            if i != j && rng.random::<f64>() < density {
                edges.push((i, j));
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();
    DirectedGraph::from_edges(n, edges).expect("valid edge list")
}

/// All-pairs hop distances along edge direction, by Floyd-Warshall.
pub fn hop_distances(g: &DirectedGraph) -> Vec<Vec<usize>> {
    let n = g.n();
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for (a, b) in g.edges() {
        d[a - 1][b - 1] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

/// Oracle whose stochastic gradient of agent `i` is always row `i` of a
/// fixed matrix, whatever the point.
pub struct FrozenOracle {
    pub grads: Array2<f64>,
}

impl Oracle for FrozenOracle {
    fn agents(&self) -> usize {
        self.grads.nrows()
    }

    fn dim(&self) -> usize {
        self.grads.ncols()
    }

    fn local_value(&self, agent: usize, x: ArrayView1<'_, f64>) -> f64 {
        self.grads.row(agent).dot(&x)
    }

    fn local_gradient(&self, agent: usize, _x: ArrayView1<'_, f64>) -> Array1<f64> {
        self.grads.row(agent).to_owned()
    }

    fn sample_gradient(
        &self,
        agent: usize,
        x: ArrayView1<'_, f64>,
        _rng: &mut ChaCha8Rng,
    ) -> Array1<f64> {
        self.local_gradient(agent, x)
    }

    fn smoothness(&self) -> f64 {
        1.0
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    cov / var
}

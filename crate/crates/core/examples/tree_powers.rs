//! Checks the closed form of tree-matrix powers on a random digraph: every
//! power equals its distance-indicator matrix, powers collapse onto the root
//! at the tree depth, and the distance to the limit shrinks with coverage.
//!
//! cargo run --example tree_powers

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stpp::mixing::{build_pull_matrix, build_push_matrix, indicator_power, spectral_norm_defect};
use stpp::topology::{check_strongly_connected, tree_stats, DirectedGraph, SpanningTreePair};

fn print_matrix(name: &str, m: &Array2<i64>) {
    println!("{name}:");
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        println!("  {}", cells.join(" "));
    }
}

fn main() -> stpp::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 10;
    let g = loop {
        let edges: Vec<(usize, usize)> = (1..=n)
            .flat_map(|i| (1..=n).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j)
            .filter(|_| rng.random::<f64>() < 0.2)
            .collect();
        let g = DirectedGraph::from_edges(n, edges)?;
        if check_strongly_connected(&g) {
            break g;
        }
    };
    let trees = SpanningTreePair::extract(&g, 1)?;
    let r = build_pull_matrix(&trees.pull)?;
    let c = build_push_matrix(&trees.push)?;
    print_matrix("R", r.entries());
    print_matrix("C", c.entries());

    for (name, tree, m) in [("R", &trees.pull, &r), ("C", &trees.push, &c)] {
        let stats = tree_stats(tree);
        println!(
            "\n{name}: depth {}, counts {:?}, average distance {:.3}",
            stats.d, stats.counts, stats.avg
        );
        for k in 1..=n {
            assert_eq!(m.power(k), indicator_power(tree, k).predicted_power());
        }
        println!("  powers 1..={n} match the distance indicators");
        println!(
            "  power {} equals the limit: {}",
            stats.d,
            m.power(stats.d) == m.limit()
        );
        for k in 0..stats.d {
            let defect = spectral_norm_defect(m, k);
            let bound = (2.0 * (n - stats.counts[k]) as f64).sqrt();
            println!("  k = {k}: ||{name}^k - limit||_2 = {defect:.4} <= {bound:.4}");
        }
    }
    Ok(())
}

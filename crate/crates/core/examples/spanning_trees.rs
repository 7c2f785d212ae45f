//! Extracts pull/push spanning trees for every built-in topology family and
//! prints their depth statistics.
//!
//! cargo run --example spanning_trees -- 16

use stpp::topology::{center_root, tree_stats, Family, SpanningTreePair};

fn main() -> stpp::Result<()> {
    let n: usize = std::env::args()
        .nth(1)
        .map_or(Ok(16), |s| s.parse())
        .expect("n must be an integer");
    println!(
        "{:<14} {:>4} {:>5} {:>4} {:>4} {:>7} {:>7}",
        "family", "n", "root", "d_R", "d_C", "r_avg", "c_avg"
    );
    for family in [
        Family::DiRing,
        Family::Ring,
        Family::Grid,
        Family::StaticExp,
        Family::MultiSubring,
    ] {
        let m = (family == Family::MultiSubring).then_some(2);
        let g = match family.generate(n, m) {
            Ok(g) => g,
            Err(e) => {
                println!("{:<14} skipped: {e}", family.name());
                continue;
            }
        };
        let root = center_root(&g)?;
        let trees = SpanningTreePair::extract(&g, root)?;
        let (pull, push) = (tree_stats(&trees.pull), tree_stats(&trees.push));
        println!(
            "{:<14} {:>4} {:>5} {:>4} {:>4} {:>7.3} {:>7.3}",
            family.name(),
            n,
            root,
            pull.d,
            push.d,
            pull.avg,
            push.avg
        );
    }

    let g = Family::DiRing.generate(6, None)?;
    let trees = SpanningTreePair::extract(&g, 1)?;
    println!("\ndirected ring, n = 6, root 1");
    println!("pull parents: {:?}", trees.pull.links());
    println!("push children: {:?}", trees.push.links());
    Ok(())
}

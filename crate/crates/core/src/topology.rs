//! Communication graphs and the pull/push spanning trees extracted from them.
//!
//! Nodes are labeled `1..=n` everywhere in the public API. An edge `(j, i)`
//! means node `j` can send to node `i`. Self-communication is implicit and
//! never stored.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Directed communication graph on nodes `1..=n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedGraph {
    n: usize,
    // 0-based adjacency, sorted ascending
    out: Vec<Vec<usize>>,
    inc: Vec<Vec<usize>>,
}

impl DirectedGraph {
    /// Builds a graph from 1-based `(from, to)` pairs. Self-loops and
    /// duplicates are dropped; out-of-range endpoints are an error.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSize("graph needs at least one node".into()));
        }
        let mut set = BTreeSet::new();
        for (j, i) in edges {
            for node in [j, i] {
                if node == 0 || node > n {
                    return Err(Error::NodeOutOfRange { node, n });
                }
            }
            if j != i {
                set.insert((j - 1, i - 1));
            }
        }
        let mut out = vec![Vec::new(); n];
        let mut inc = vec![Vec::new(); n];
        for &(j, i) in &set {
            out[j].push(i);
            inc[i].push(j);
        }
        for list in inc.iter_mut() {
            list.sort_unstable();
        }
        Ok(Self { n, out, inc })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    /// All edges as 1-based `(from, to)` pairs in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(j, outs)| outs.iter().map(move |&i| (j + 1, i + 1)))
            .collect()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        if from == 0 || to == 0 || from > self.n || to > self.n {
            return false;
        }
        self.out[from - 1].binary_search(&(to - 1)).is_ok()
    }

    /// 1-based out-neighbors of `node`.
    pub fn out_neighbors(&self, node: usize) -> Vec<usize> {
        self.out[node - 1].iter().map(|&i| i + 1).collect()
    }

    /// 1-based in-neighbors of `node`.
    pub fn in_neighbors(&self, node: usize) -> Vec<usize> {
        self.inc[node - 1].iter().map(|&i| i + 1).collect()
    }

    pub fn out_degree(&self, node: usize) -> usize {
        self.out[node - 1].len()
    }

    pub fn in_degree(&self, node: usize) -> usize {
        self.inc[node - 1].len()
    }

    /// True when every edge has its reverse.
    pub fn is_symmetric(&self) -> bool {
        self.first_unreversed_edge().is_none()
    }

    pub(crate) fn first_unreversed_edge(&self) -> Option<(usize, usize)> {
        self.edges()
            .into_iter()
            .find(|&(j, i)| !self.has_edge(i, j))
    }

    pub(crate) fn out_adj(&self) -> &[Vec<usize>] {
        &self.out
    }

    pub(crate) fn in_adj(&self) -> &[Vec<usize>] {
        &self.inc
    }

    fn check_node(&self, node: usize) -> Result<usize> {
        if node == 0 || node > self.n {
            Err(Error::NodeOutOfRange { node, n: self.n })
        } else {
            Ok(node - 1)
        }
    }
}

/// Benchmark topology families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    DiRing,
    Ring,
    Grid,
    StaticExp,
    MultiSubring,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::DiRing,
        Family::Ring,
        Family::Grid,
        Family::StaticExp,
        Family::MultiSubring,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::DiRing => "di-ring",
            Family::Ring => "ring",
            Family::Grid => "grid",
            Family::StaticExp => "static-exp",
            Family::MultiSubring => "multi-subring",
        }
    }

    /// Builds the family member with `n` nodes. `m` is the sub-ring count
    /// and is only read by [`Family::MultiSubring`] (default 2).
    pub fn generate(self, n: usize, m: Option<usize>) -> Result<DirectedGraph> {
        match self {
            Family::DiRing => gen_directed_ring(n),
            Family::Ring => gen_ring(n),
            Family::Grid => gen_grid_n(n),
            Family::StaticExp => gen_static_exponential(n),
            Family::MultiSubring => gen_multi_subring(n, m.unwrap_or(2)),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|fam| fam.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown topology family `{s}`")))
    }
}

/// Directed ring `1 -> 2 -> ... -> n -> 1`.
pub fn gen_directed_ring(n: usize) -> Result<DirectedGraph> {
    if n < 2 {
        return Err(Error::InvalidSize(format!(
            "directed ring needs n >= 2, got {n}"
        )));
    }
    DirectedGraph::from_edges(n, (1..=n).map(|i| (i, i % n + 1)))
}

/// Undirected ring stored as both directions of every ring edge.
pub fn gen_ring(n: usize) -> Result<DirectedGraph> {
    if n < 3 {
        return Err(Error::InvalidSize(format!("ring needs n >= 3, got {n}")));
    }
    DirectedGraph::from_edges(n, (1..=n).flat_map(|i| [(i, i % n + 1), (i % n + 1, i)]))
}

/// Bidirected `rows x cols` lattice without wraparound. Node `(r, c)` is
/// labeled `r * cols + c + 1`.
pub fn gen_grid(rows: usize, cols: usize) -> Result<DirectedGraph> {
    if rows < 2 || cols < 2 {
        return Err(Error::InvalidSize(format!(
            "grid needs rows, cols >= 2, got {rows}x{cols}"
        )));
    }
    let id = |r: usize, c: usize| r * cols + c + 1;
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                edges.push((id(r, c), id(r, c + 1)));
                edges.push((id(r, c + 1), id(r, c)));
            }
            if r + 1 < rows {
                edges.push((id(r, c), id(r + 1, c)));
                edges.push((id(r + 1, c), id(r, c)));
            }
        }
    }
    DirectedGraph::from_edges(rows * cols, edges)
}

/// Most-square factorization `rows <= cols` with `rows * cols = n`.
pub fn most_square_dims(n: usize) -> (usize, usize) {
    let mut rows = (n as f64).sqrt() as usize;
    while rows > 1 && !n.is_multiple_of(rows) {
        rows -= 1;
    }
    let rows = rows.max(1);
    (rows, n / rows)
}

/// Grid on `n` nodes using the most-square factorization.
pub fn gen_grid_n(n: usize) -> Result<DirectedGraph> {
    let (rows, cols) = most_square_dims(n);
    gen_grid(rows, cols).map_err(|_| {
        Error::InvalidSize(format!("no non-degenerate grid factorization for n = {n}"))
    })
}

/// Static exponential graph: node `i` sends to `((i - 1 + 2^j) mod n) + 1`
/// for `j = 0..ceil(log2 n)`.
pub fn gen_static_exponential(n: usize) -> Result<DirectedGraph> {
    if n < 2 {
        return Err(Error::InvalidSize(format!(
            "static exponential graph needs n >= 2, got {n}"
        )));
    }
    let hops = usize::BITS - (n - 1).leading_zeros();
    let edges = (1..=n).flat_map(|i| (0..hops).map(move |j| (i, (i - 1 + (1 << j)) % n + 1)));
    DirectedGraph::from_edges(n, edges)
}

/// `m` directed cycles through node 1 that partition nodes `2..=n` into
/// contiguous blocks of near-equal size (larger blocks first).
pub fn gen_multi_subring(n: usize, m: usize) -> Result<DirectedGraph> {
    if m < 2 || n < 2 * m + 1 {
        return Err(Error::InvalidSize(format!(
            "multi-subring needs m >= 2 and n >= 2m + 1, got n = {n}, m = {m}"
        )));
    }
    let others = n - 1;
    let (base, extra) = (others / m, others % m);
    let mut edges = Vec::with_capacity(n + m);
    let mut next = 2;
    for b in 0..m {
        let len = base + usize::from(b < extra);
        let block: Vec<usize> = (next..next + len).collect();
        next += len;
        edges.push((1, block[0]));
        edges.extend(block.windows(2).map(|w| (w[0], w[1])));
        edges.push((block[len - 1], 1));
    }
    DirectedGraph::from_edges(n, edges)
}

fn bfs_distances(adj: &[Vec<usize>], source: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; adj.len()];
    dist[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        let du = dist[u].unwrap_or(0);
        for &v in &adj[u] {
            if dist[v].is_none() {
                dist[v] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// True iff every node reaches every other node along directed edges.
pub fn check_strongly_connected(g: &DirectedGraph) -> bool {
    let forward = bfs_distances(g.out_adj(), 0);
    let backward = bfs_distances(g.in_adj(), 0);
    forward.iter().chain(&backward).all(Option::is_some)
}

/// Whether a tree's links point toward parents (pull) or children (push).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Pull,
    Push,
}

impl Orientation {
    pub fn name(self) -> &'static str {
        match self {
            Orientation::Pull => "pull",
            Orientation::Push => "push",
        }
    }
}

/// Spanning tree rooted at `root`.
///
/// For a pull tree `link(i)` is the parent of `i` (parameters flow parent to
/// child); for a push tree it is the unique child of `i` (trackers flow
/// toward the root). Either way following links walks toward the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanningTree {
    root: usize,
    orientation: Orientation,
    // 0-based; None only at the root
    links: Vec<Option<usize>>,
    depth: Vec<usize>,
}

impl SpanningTree {
    /// Builds a tree from 1-based links (`links[i - 1]` is the link of node
    /// `i`, `None` for the root) and checks the tree invariants.
    pub fn from_links(
        root: usize,
        orientation: Orientation,
        links: Vec<Option<usize>>,
    ) -> Result<Self> {
        let n = links.len();
        if root == 0 || root > n {
            return Err(Error::NodeOutOfRange { node: root, n });
        }
        let mut zero_based = Vec::with_capacity(n);
        for (idx, link) in links.into_iter().enumerate() {
            let node = idx + 1;
            match link {
                None if node == root => zero_based.push(None),
                None => {
                    return Err(Error::InvalidParameter(format!(
                        "non-root node {node} has no link"
                    )))
                }
                Some(_) if node == root => {
                    return Err(Error::InvalidParameter("root must not have a link".into()))
                }
                Some(l) if l == 0 || l > n => return Err(Error::NodeOutOfRange { node: l, n }),
                Some(l) => zero_based.push(Some(l - 1)),
            }
        }
        let depth = depths_from_links(&zero_based, root - 1)?;
        Ok(Self {
            root,
            orientation,
            links: zero_based,
            depth,
        })
    }

    pub fn n(&self) -> usize {
        self.links.len()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    /// Parent (pull) or child (push) of `node`, 1-based; `None` at the root.
    pub fn link(&self, node: usize) -> Option<usize> {
        self.links[node - 1].map(|l| l + 1)
    }

    /// Depth of `node` (1-based id).
    pub fn depth(&self, node: usize) -> usize {
        self.depth[node - 1]
    }

    /// Depths indexed by `node - 1`.
    pub fn depths(&self) -> &[usize] {
        &self.depth
    }

    /// Links as 1-based ids indexed by `node - 1`.
    pub fn links(&self) -> Vec<Option<usize>> {
        self.links.iter().map(|l| l.map(|v| v + 1)).collect()
    }

    pub(crate) fn links0(&self) -> &[Option<usize>] {
        &self.links
    }

    pub fn diameter(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    /// Checks that every link is an edge of `g` in the orientation's direction.
    pub fn validate_against(&self, g: &DirectedGraph) -> Result<()> {
        if g.n() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "tree has {} nodes, graph has {}",
                self.n(),
                g.n()
            )));
        }
        for node in 1..=self.n() {
            let Some(l) = self.link(node) else { continue };
            let (from, to) = match self.orientation {
                Orientation::Pull => (l, node),
                Orientation::Push => (node, l),
            };
            if !g.has_edge(from, to) {
                return Err(Error::InvalidParameter(format!(
                    "{} link ({from}, {to}) is not a graph edge",
                    self.orientation.name()
                )));
            }
        }
        Ok(())
    }
}

fn depths_from_links(links: &[Option<usize>], root: usize) -> Result<Vec<usize>> {
    let n = links.len();
    let mut depth: Vec<Option<usize>> = vec![None; n];
    depth[root] = Some(0);
    for start in 0..n {
        let mut path = Vec::new();
        let mut cur = start;
        while depth[cur].is_none() {
            if path.len() > n {
                return Err(Error::InvalidParameter("links contain a cycle".into()));
            }
            path.push(cur);
            cur = links[cur].expect("non-root nodes carry a link");
        }
        let mut d = depth[cur].unwrap_or(0);
        for &node in path.iter().rev() {
            d += 1;
            depth[node] = Some(d);
        }
    }
    Ok(depth.into_iter().map(|d| d.unwrap_or(0)).collect())
}

// Shortest-path tree: each non-root node links to the lowest-id neighbor one
// step closer to the root. `toward` lists, per node, the candidates to link to.
fn shortest_path_tree(
    g: &DirectedGraph,
    root: usize,
    orientation: Orientation,
) -> Result<SpanningTree> {
    let r = g.check_node(root)?;
    if !check_strongly_connected(g) {
        return Err(Error::NotStronglyConnected);
    }
    let (explore, toward) = match orientation {
        Orientation::Pull => (g.out_adj(), g.in_adj()),
        Orientation::Push => (g.in_adj(), g.out_adj()),
    };
    let dist: Vec<usize> = bfs_distances(explore, r)
        .into_iter()
        .map(|d| d.expect("strongly connected"))
        .collect();
    let links = (0..g.n())
        .map(|i| {
            if i == r {
                return None;
            }
            toward[i]
                .iter()
                .copied()
                .find(|&j| dist[j] + 1 == dist[i])
                .map(|j| j + 1)
        })
        .collect();
    SpanningTree::from_links(root, orientation, links)
}

/// Breadth-first pull tree: parameters flow from each parent `j` to child
/// `i` along an edge `(j, i)`.
pub fn extract_pull_tree(g: &DirectedGraph, root: usize) -> Result<SpanningTree> {
    shortest_path_tree(g, root, Orientation::Pull)
}

/// Breadth-first push tree on the reversed graph: each non-root node sends
/// to its unique child along an edge `(node, child)`.
pub fn extract_push_tree(g: &DirectedGraph, root: usize) -> Result<SpanningTree> {
    shortest_path_tree(g, root, Orientation::Push)
}

/// Pull and push trees sharing one root.
#[derive(Debug, Clone)]
pub struct SpanningTreePair {
    pub pull: SpanningTree,
    pub push: SpanningTree,
}

impl SpanningTreePair {
    pub fn extract(g: &DirectedGraph, root: usize) -> Result<Self> {
        Ok(Self {
            pull: extract_pull_tree(g, root)?,
            push: extract_push_tree(g, root)?,
        })
    }

    pub fn root(&self) -> usize {
        self.pull.root()
    }
}

/// Node whose shortest-path trees have the smallest `max(d_R, d_C)`, then the
/// smallest summed average distance; lowest id on ties.
pub fn center_root(g: &DirectedGraph) -> Result<usize> {
    if !check_strongly_connected(g) {
        return Err(Error::NotStronglyConnected);
    }
    let mut best: Option<(usize, usize, usize)> = None;
    for r in 0..g.n() {
        let pull: Vec<usize> = bfs_distances(g.out_adj(), r)
            .into_iter()
            .flatten()
            .collect();
        let push: Vec<usize> = bfs_distances(g.in_adj(), r).into_iter().flatten().collect();
        let ecc = pull.iter().chain(&push).copied().max().unwrap_or(0);
        let total = pull.iter().sum::<usize>() + push.iter().sum::<usize>();
        if best.is_none_or(|(e, t, _)| (ecc, total) < (e, t)) {
            best = Some((ecc, total, r));
        }
    }
    Ok(best.map_or(1, |(_, _, r)| r + 1))
}

/// Diameter, distance-profile counts, and average distance of a tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeStats {
    pub d: usize,
    /// `counts[k]` is the number of nodes at depth `<= k`, for `k = 0..=d`.
    pub counts: Vec<usize>,
    pub avg: f64,
}

impl TreeStats {
    pub fn n(&self) -> usize {
        self.counts.last().copied().unwrap_or(0)
    }

    /// `counts[k]`, saturating at `n` for `k > d`.
    pub fn count_within(&self, k: usize) -> usize {
        self.counts.get(k).copied().unwrap_or_else(|| self.n())
    }
}

pub fn tree_stats(t: &SpanningTree) -> TreeStats {
    let n = t.n();
    let d = t.diameter();
    let mut at_depth = vec![0usize; d + 1];
    for &dep in t.depths() {
        at_depth[dep] += 1;
    }
    let counts: Vec<usize> = at_depth
        .iter()
        .scan(0, |acc, &c| {
            *acc += c;
            Some(*acc)
        })
        .collect();
    let missing: usize = counts[..d].iter().map(|&c| n - c).sum();
    TreeStats {
        d,
        counts,
        avg: missing as f64 / n as f64,
    }
}

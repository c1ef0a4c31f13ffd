//! Undirected simple graphs and the generators used for the archetype set.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;

use crate::seed;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("a graph needs at least {min} nodes, got {got}")]
    TooFewNodes { min: usize, got: usize },
    #[error("no {k}-regular ring lattice on {n} nodes (need k < n, and n even when k is odd)")]
    InfeasibleLattice { n: usize, k: usize },
    #[error("rewire probability {0} is outside [0, 1]")]
    InvalidProbability(f64),
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("edge ({u}, {v}) references a node outside 0..{n}")]
    NodeOutOfRange { u: usize, v: usize, n: usize },
    #[error("graph is not connected")]
    Disconnected,
    #[error("node {0} has no neighbours")]
    IsolatedNode(usize),
    #[error("unknown archetype label `{0}`")]
    UnknownArchetype(alloc::string::String),
    #[error("search budget exhausted without a connected candidate")]
    BudgetExhausted,
}

/// The ten network archetypes, plus a catch-all for user-supplied graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Archetype {
    FullyConnected,
    MaxMaxCloseness,
    MinMaxCloseness,
    MinMeanBetweenness,
    MinMeanClustering,
    MaxMaxBetweenness,
    MaxMeanClustering,
    MaxMeanBetweenness,
    MaxVarConstraint,
    Lattice,
    Custom,
}

impl Archetype {
    /// The ten archetypes in table order (efficient networks first).
    pub const TEN: [Archetype; 10] = [
        Archetype::FullyConnected,
        Archetype::MaxMaxCloseness,
        Archetype::MinMaxCloseness,
        Archetype::MinMeanBetweenness,
        Archetype::MinMeanClustering,
        Archetype::MaxMaxBetweenness,
        Archetype::MaxMeanClustering,
        Archetype::MaxMeanBetweenness,
        Archetype::MaxVarConstraint,
        Archetype::Lattice,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Archetype::FullyConnected => "fully_connected",
            Archetype::MaxMaxCloseness => "max_max_closeness",
            Archetype::MinMaxCloseness => "min_max_closeness",
            Archetype::MinMeanBetweenness => "min_mean_betweenness",
            Archetype::MinMeanClustering => "min_mean_clustering",
            Archetype::MaxMaxBetweenness => "max_max_betweenness",
            Archetype::MaxMeanClustering => "max_mean_clustering",
            Archetype::MaxMeanBetweenness => "max_mean_betweenness",
            Archetype::MaxVarConstraint => "max_var_constraint",
            Archetype::Lattice => "lattice",
            Archetype::Custom => "custom",
        }
    }
}

impl fmt::Display for Archetype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Archetype {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Archetype::TEN
            .iter()
            .chain(core::iter::once(&Archetype::Custom))
            .find(|a| a.label() == s)
            .copied()
            .ok_or_else(|| GraphError::UnknownArchetype(s.into()))
    }
}

/// An undirected simple graph on nodes `0..node_count`.
///
/// Adjacency lists are kept sorted, so two graphs with the same edge set
/// compare equal regardless of how they were built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    adjacency: Vec<Vec<usize>>,
    archetype: Option<Archetype>,
    generation_seed: Option<u64>,
}

impl Graph {
    /// Build a graph from an edge list, rejecting self-loops, duplicates and
    /// out-of-range endpoints. Connectivity is *not* required here; use
    /// [`Graph::is_connected`] or [`Graph::require_connected`].
    pub fn from_edges(node_count: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        if node_count == 0 {
            return Err(GraphError::TooFewNodes { min: 1, got: 0 });
        }
        let mut adjacency = vec![Vec::new(); node_count];
        for &(u, v) in edges {
            if u >= node_count || v >= node_count {
                return Err(GraphError::NodeOutOfRange { u, v, n: node_count });
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for (u, list) in adjacency.iter_mut().enumerate() {
            list.sort_unstable();
            if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
                let v = w[0];
                return Err(GraphError::DuplicateEdge(u.min(v), u.max(v)));
            }
        }
        Ok(Graph {
            adjacency,
            archetype: None,
            generation_seed: None,
        })
    }

    pub(crate) fn from_sorted_adjacency(adjacency: Vec<Vec<usize>>) -> Self {
        Graph {
            adjacency,
            archetype: None,
            generation_seed: None,
        }
    }

    pub(crate) fn adjacency_mut(&mut self) -> &mut [Vec<usize>] {
        &mut self.adjacency
    }

    pub fn with_archetype(mut self, archetype: Archetype) -> Self {
        self.archetype = Some(archetype);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.generation_seed = Some(seed);
        self
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn archetype(&self) -> Option<Archetype> {
        self.archetype
    }

    pub fn generation_seed(&self) -> Option<u64> {
        self.generation_seed
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[u].binary_search(&v).is_ok()
    }

    /// Edges as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    pub fn degrees(&self) -> impl Iterator<Item = usize> + '_ {
        self.adjacency.iter().map(Vec::len)
    }

    pub fn is_connected(&self) -> bool {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == n
    }

    pub fn require_connected(&self) -> Result<(), GraphError> {
        if self.is_connected() {
            Ok(())
        } else {
            Err(GraphError::Disconnected)
        }
    }
}

/// Every pair of the `n` nodes adjacent.
pub fn complete_graph(n: usize) -> Result<Graph, GraphError> {
    if n < 2 {
        return Err(GraphError::TooFewNodes { min: 2, got: n });
    }
    let adjacency = (0..n)
        .map(|u| (0..n).filter(|&v| v != u).collect())
        .collect();
    Ok(Graph::from_sorted_adjacency(adjacency).with_archetype(Archetype::FullyConnected))
}

/// A `k`-regular ring lattice: each node links to its `k/2` nearest
/// neighbours on either side, plus the antipodal node when `k` is odd.
pub fn ring_lattice(n: usize, k: usize) -> Result<Graph, GraphError> {
    if n < 3 || k == 0 || k >= n || (k % 2 == 1 && n % 2 == 1) {
        return Err(GraphError::InfeasibleLattice { n, k });
    }
    let edges = lattice_edges(n, k);
    let g = Graph::from_edges(n, &edges)?;
    Ok(g.with_archetype(Archetype::Lattice))
}

fn lattice_edges(n: usize, k: usize) -> Vec<(usize, usize)> {
    let half = k / 2;
    let mut edges = Vec::with_capacity(n * k / 2);
    for u in 0..n {
        for step in 1..=half {
            edges.push((u, (u + step) % n));
        }
    }
    if k % 2 == 1 {
        for u in 0..n / 2 {
            edges.push((u, u + n / 2));
        }
    }
    edges
}

/// Watts–Strogatz small world built on [`ring_lattice`].
///
/// Each lattice edge `(u, v)` is, with probability `p`, replaced by `(u, w)`
/// for a uniformly chosen `w`. Candidates that would create a duplicate edge
/// or disconnect the graph are redrawn; after a bounded number of redraws the
/// original edge is kept.
pub fn watts_strogatz(n: usize, k: usize, p: f64, seed: u64) -> Result<Graph, GraphError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(GraphError::InvalidProbability(p));
    }
    let lattice = ring_lattice(n, k)?;
    if p == 0.0 {
        return Ok(lattice.with_seed(seed));
    }
    let mut rng = seed::rng(seed);
    let mut adjacency = lattice.adjacency;
    for (u, v) in lattice_edges(n, k) {
        if !rng.random_bool(p) {
            continue;
        }
        // (u, v) may already have been moved away by an earlier rewire of v's edges
        if adjacency[u].binary_search(&v).is_err() {
            continue;
        }
        remove_sorted(&mut adjacency[u], v);
        remove_sorted(&mut adjacency[v], u);
        let mut placed = false;
        for _ in 0..4 * n {
            let w = rng.random_range(0..n);
            if w == u || adjacency[u].binary_search(&w).is_ok() {
                continue;
            }
            insert_sorted(&mut adjacency[u], w);
            insert_sorted(&mut adjacency[w], u);
            if connected_adjacency(&adjacency) {
                placed = true;
                break;
            }
            remove_sorted(&mut adjacency[u], w);
            remove_sorted(&mut adjacency[w], u);
        }
        if !placed {
            insert_sorted(&mut adjacency[u], v);
            insert_sorted(&mut adjacency[v], u);
        }
    }
    Ok(Graph::from_sorted_adjacency(adjacency)
        .with_archetype(Archetype::Custom)
        .with_seed(seed))
}

pub(crate) fn insert_sorted(list: &mut Vec<usize>, v: usize) {
    if let Err(pos) = list.binary_search(&v) {
        list.insert(pos, v);
    }
}

pub(crate) fn remove_sorted(list: &mut Vec<usize>, v: usize) {
    if let Ok(pos) = list.binary_search(&v) {
        list.remove(pos);
    }
}

fn connected_adjacency(adjacency: &[Vec<usize>]) -> bool {
    Graph {
        adjacency: adjacency.to_vec(),
        archetype: None,
        generation_seed: None,
    }
    .is_connected()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_is_smallest_complete_graph() {
        let g = complete_graph(3).unwrap();
        assert_eq!(g.edge_count(), 3);
        assert!(complete_graph(1).is_err());
    }

    #[test]
    fn complete_100_has_4950_edges() {
        let g = complete_graph(100).unwrap();
        assert_eq!(g.edge_count(), 4950);
        assert!(g.degrees().all(|d| d == 99));
    }

    #[test]
    fn six_cycle() {
        let g = ring_lattice(6, 2).unwrap();
        let edges: Vec<_> = g.edges().collect();
        assert_eq!(edges, vec![(0, 1), (0, 5), (1, 2), (2, 3), (3, 4), (4, 5)]);
    }

    #[test]
    fn odd_degree_lattice_uses_antipode() {
        let g = ring_lattice(100, 19).unwrap();
        assert!(g.degrees().all(|d| d == 19));
        assert!(g.has_edge(0, 50));
        assert!(g.has_edge(0, 9) && !g.has_edge(0, 10));
        assert!(g.is_connected());
    }

    #[test]
    fn infeasible_lattices_rejected() {
        assert!(matches!(ring_lattice(9, 3), Err(GraphError::InfeasibleLattice { .. })));
        assert!(ring_lattice(5, 5).is_err());
        assert!(ring_lattice(5, 0).is_err());
    }

    #[test]
    fn from_edges_validates() {
        assert_eq!(Graph::from_edges(3, &[(1, 1)]), Err(GraphError::SelfLoop(1)));
        assert_eq!(
            Graph::from_edges(3, &[(0, 1), (1, 0)]),
            Err(GraphError::DuplicateEdge(0, 1))
        );
        assert!(matches!(
            Graph::from_edges(3, &[(0, 3)]),
            Err(GraphError::NodeOutOfRange { .. })
        ));
        let g = Graph::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        assert_eq!(g.require_connected(), Err(GraphError::Disconnected));
    }

    #[test]
    fn ws_zero_rewiring_is_lattice() {
        let ws = watts_strogatz(30, 4, 0.0, 9).unwrap();
        let lat = ring_lattice(30, 4).unwrap();
        assert!(ws.edges().eq(lat.edges()));
    }

    #[test]
    fn ws_full_rewiring_conserves_edges() {
        let g = watts_strogatz(100, 18, 1.0, 42).unwrap();
        assert_eq!(g.edge_count(), 900);
        assert!(g.is_connected());
        assert_ne!(g, ring_lattice(100, 18).unwrap().with_archetype(Archetype::Custom));
    }

    #[test]
    fn ws_rejects_bad_probability() {
        assert!(matches!(
            watts_strogatz(10, 2, 1.5, 0),
            Err(GraphError::InvalidProbability(_))
        ));
    }

    #[test]
    fn archetype_labels_round_trip() {
        for a in Archetype::TEN {
            assert_eq!(a.label().parse::<Archetype>().unwrap(), a);
        }
        assert!("torus".parse::<Archetype>().is_err());
    }
}

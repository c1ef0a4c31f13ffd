//! Structural measures used to characterise the archetype networks.
//!
//! Conventions (classic Freeman forms):
//! - closeness of `i` is `(n - 1) / Σ_j d(i, j)`;
//! - betweenness counts unordered pairs `{s, t}` and is divided by
//!   `(n - 1)(n - 2) / 2`;
//! - local clustering is `triangles(i) / C(deg(i), 2)`, zero below degree 2;
//! - Burt's constraint is `c_i = Σ_{j ∈ N(i)} (p_ij + Σ_q p_iq p_qj)²` with
//!   `p_ij = 1 / deg(i)` and `q` ranging over common neighbours of `i`, `j`.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::graph::{Graph, GraphError};

/// Per-node values behind [`GraphMetrics`].
#[derive(Debug, Clone, PartialEq)]
pub struct NodeMetrics {
    pub eccentricity: Vec<usize>,
    pub closeness: Vec<f64>,
    pub betweenness: Vec<f64>,
    pub clustering: Vec<f64>,
    pub constraint: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphMetrics {
    pub radius: usize,
    pub diameter: usize,
    pub mean_closeness: f64,
    pub max_closeness: f64,
    pub mean_betweenness: f64,
    pub max_betweenness: f64,
    pub mean_clustering: f64,
    pub mean_constraint: f64,
    /// Population variance of node constraint.
    pub constraint_variance: f64,
    pub degree_min: usize,
    pub degree_max: usize,
}

/// Summary measures of a connected graph.
pub fn metrics(g: &Graph) -> Result<GraphMetrics, GraphError> {
    let nodes = node_metrics(g)?;
    let n = g.node_count() as f64;
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / n;
    let max = |xs: &[f64]| xs.iter().copied().fold(f64::MIN, f64::max);
    let mean_constraint = mean(&nodes.constraint);
    let constraint_variance = nodes
        .constraint
        .iter()
        .map(|c| (c - mean_constraint) * (c - mean_constraint))
        .sum::<f64>()
        / n;
    Ok(GraphMetrics {
        radius: nodes.eccentricity.iter().copied().min().unwrap_or(0),
        diameter: nodes.eccentricity.iter().copied().max().unwrap_or(0),
        mean_closeness: mean(&nodes.closeness),
        max_closeness: max(&nodes.closeness),
        mean_betweenness: mean(&nodes.betweenness),
        max_betweenness: max(&nodes.betweenness),
        mean_clustering: mean(&nodes.clustering),
        mean_constraint,
        constraint_variance,
        degree_min: g.degrees().min().unwrap_or(0),
        degree_max: g.degrees().max().unwrap_or(0),
    })
}

pub fn node_metrics(g: &Graph) -> Result<NodeMetrics, GraphError> {
    if g.node_count() < 2 {
        return Err(GraphError::TooFewNodes {
            min: 2,
            got: g.node_count(),
        });
    }
    g.require_connected()?;
    let (eccentricity, closeness) = eccentricity_and_closeness(g);
    Ok(NodeMetrics {
        eccentricity,
        closeness,
        betweenness: betweenness(g),
        clustering: clustering(g),
        constraint: constraint(g),
    })
}

fn bfs_distances(g: &Graph, source: usize, dist: &mut [usize]) {
    dist.fill(usize::MAX);
    dist[source] = 0;
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        for &v in g.neighbors(u) {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
}

fn eccentricity_and_closeness(g: &Graph) -> (Vec<usize>, Vec<f64>) {
    let n = g.node_count();
    let mut dist = vec![0; n];
    let mut ecc = Vec::with_capacity(n);
    let mut clo = Vec::with_capacity(n);
    for s in 0..n {
        bfs_distances(g, s, &mut dist);
        ecc.push(dist.iter().copied().max().unwrap_or(0));
        let total: usize = dist.iter().sum();
        clo.push((n - 1) as f64 / total as f64);
    }
    (ecc, clo)
}

/// Brandes' accumulation, normalised over unordered pairs.
pub(crate) fn betweenness(g: &Graph) -> Vec<f64> {
    let n = g.node_count();
    let mut centrality = vec![0.0; n];
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![usize::MAX; n];
    let mut delta = vec![0.0f64; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::with_capacity(n);
    for s in 0..n {
        sigma.fill(0.0);
        dist.fill(usize::MAX);
        delta.fill(0.0);
        order.clear();
        sigma[s] = 1.0;
        dist[s] = 0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &v in g.neighbors(u) {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
                if dist[v] == dist[u] + 1 {
                    sigma[v] += sigma[u];
                }
            }
        }
        for &w in order.iter().rev() {
            for &v in g.neighbors(w) {
                if dist[v] + 1 == dist[w] {
                    delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
                }
            }
            if w != s {
                centrality[w] += delta[w];
            }
        }
    }
    // each unordered pair was counted from both ends
    let scale = if n > 2 {
        1.0 / ((n - 1) * (n - 2)) as f64
    } else {
        0.0
    };
    centrality.iter_mut().for_each(|c| *c *= scale);
    centrality
}

fn common_neighbors(g: &Graph, u: usize, v: usize) -> impl Iterator<Item = usize> + '_ {
    let (a, b) = (g.neighbors(u), g.neighbors(v));
    let (mut i, mut j) = (0, 0);
    core::iter::from_fn(move || {
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                core::cmp::Ordering::Less => i += 1,
                core::cmp::Ordering::Greater => j += 1,
                core::cmp::Ordering::Equal => {
                    let x = a[i];
                    i += 1;
                    j += 1;
                    return Some(x);
                }
            }
        }
        None
    })
}

pub(crate) fn clustering(g: &Graph) -> Vec<f64> {
    (0..g.node_count())
        .map(|u| {
            let k = g.degree(u);
            if k < 2 {
                return 0.0;
            }
            let links: usize = g
                .neighbors(u)
                .iter()
                .map(|&v| common_neighbors(g, u, v).count())
                .sum::<usize>()
                / 2;
            links as f64 / (k * (k - 1) / 2) as f64
        })
        .collect()
}

pub(crate) fn constraint(g: &Graph) -> Vec<f64> {
    (0..g.node_count())
        .map(|i| {
            let p_i = 1.0 / g.degree(i) as f64;
            g.neighbors(i)
                .iter()
                .map(|&j| {
                    let indirect: f64 = common_neighbors(g, i, j)
                        .map(|q| p_i / g.degree(q) as f64)
                        .sum();
                    let c = p_i + indirect;
                    c * c
                })
                .sum()
        })
        .collect()
}

mod support;

use peerflip_core::metrics::node_metrics;
use peerflip_core::{complete_graph, metrics, ring_lattice, seed, watts_strogatz, Graph};
use support::oracle::{random_connected, Dense};

fn assert_close(label: &str, got: &[f64], want: &[f64]) {
    assert_eq!(got.len(), want.len());
    for (v, (g, w)) in got.iter().zip(want).enumerate() {
        assert!((g - w).abs() <= 1e-9, "{label}[{v}]: {g} vs {w}");
    }
}

#[test]
fn node_metrics_match_exhaustive_oracle() {
    let mut rng = seed::rng(0x5eed);
    for _ in 0..20 {
        let (n, edges) = random_connected(&mut rng, 12);
        let g = Graph::from_edges(n, &edges).unwrap();
        let m = node_metrics(&g).unwrap();
        let o = Dense::new(n, &edges);
        assert_close("closeness", &m.closeness, &o.closeness());
        assert_close("betweenness", &m.betweenness, &o.betweenness());
        assert_close("clustering", &m.clustering, &o.clustering());
        assert_close("constraint", &m.constraint, &o.constraint());
        let d = o.distances();
        let ecc: Vec<usize> = d.iter().map(|row| *row.iter().max().unwrap()).collect();
        assert_eq!(m.eccentricity, ecc);
    }
}

#[test]
fn complete_graph_row() {
    let m = metrics(&complete_graph(100).unwrap()).unwrap();
    assert_eq!((m.radius, m.diameter), (1, 1));
    assert_eq!(m.mean_closeness, 1.0);
    assert_eq!(m.mean_betweenness, 0.0);
    assert_eq!(m.mean_clustering, 1.0);
    // each neighbour j: (1/99 + 98 · (1/99)²)² ; 99 neighbours
    let p: f64 = 1.0 / 99.0;
    let closed = 99.0 * (p + 98.0 * p * p).powi(2);
    assert!((m.mean_constraint - closed).abs() < 1e-12);
    assert!((m.mean_constraint - 0.0402).abs() < 0.005);
}

#[test]
fn small_world_clustering_lies_between_extremes() {
    let mean = |p: f64, s: u64| metrics(&watts_strogatz(100, 18, p, s).unwrap()).unwrap().mean_clustering;
    let lattice = metrics(&ring_lattice(100, 18).unwrap()).unwrap().mean_clustering;
    assert!((lattice - 12.0 / 17.0).abs() < 1e-12);
    for s in 0..20 {
        let mid = mean(0.1, s);
        let random = mean(1.0, s);
        assert!(random < mid && mid < lattice, "seed {s}: {random} {mid} {lattice}");
        assert_eq!(mean(0.0, s), lattice);
    }
}

#[test]
fn rewired_graphs_stay_simple_and_connected() {
    for s in 0..20 {
        let g = watts_strogatz(60, 6, 0.3, s).unwrap();
        assert!(g.is_connected());
        assert_eq!(g.edge_count(), 180);
        for (u, v) in g.edges() {
            assert!(u < v);
        }
    }
}

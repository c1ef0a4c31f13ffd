//! Exhaustive reference implementations for small graphs.
//!
//! Distances come from Floyd–Warshall, shortest-path counts from explicit
//! enumeration of every walk of the geodesic length, clustering from triple
//! enumeration and constraint from a dense proportional-tie matrix.

#![allow(dead_code)]

use rand::Rng;

pub struct Dense {
    pub n: usize,
    pub adj: Vec<Vec<bool>>,
}

impl Dense {
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Dense {
        let mut adj = vec![vec![false; n]; n];
        for &(u, v) in edges {
            adj[u][v] = true;
            adj[v][u] = true;
        }
        Dense { n, adj }
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].iter().filter(|&&x| x).count()
    }

    pub fn distances(&self) -> Vec<Vec<usize>> {
        let inf = usize::MAX / 4;
        let mut d = vec![vec![inf; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = 0;
            for (cell, &edge) in row.iter_mut().zip(&self.adj[i]) {
                if edge {
                    *cell = 1;
                }
            }
        }
        for k in 0..self.n {
            for i in 0..self.n {
                for j in 0..self.n {
                    if d[i][k] + d[k][j] < d[i][j] {
                        d[i][j] = d[i][k] + d[k][j];
                    }
                }
            }
        }
        d
    }

    pub fn connected(&self) -> bool {
        let d = self.distances();
        d[0].iter().all(|&x| x < usize::MAX / 4)
    }

    /// Every shortest path from `s` to `t`, as node sequences.
    pub fn geodesics(&self, s: usize, t: usize, d: &[Vec<usize>]) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut path = vec![s];
        self.extend(t, d[s][t], &mut path, &mut out);
        out
    }

    fn extend(&self, t: usize, len: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let last = *path.last().unwrap();
        if path.len() - 1 == len {
            if last == t {
                out.push(path.clone());
            }
            return;
        }
        for next in 0..self.n {
            if self.adj[last][next] && !path.contains(&next) {
                path.push(next);
                self.extend(t, len, path, out);
                path.pop();
            }
        }
    }

    pub fn closeness(&self) -> Vec<f64> {
        let d = self.distances();
        (0..self.n)
            .map(|v| (self.n - 1) as f64 / d[v].iter().sum::<usize>() as f64)
            .collect()
    }

    /// Unordered-pair betweenness divided by (n-1)(n-2)/2.
    pub fn betweenness(&self) -> Vec<f64> {
        let d = self.distances();
        let mut b = vec![0.0; self.n];
        for s in 0..self.n {
            for t in s + 1..self.n {
                let paths = self.geodesics(s, t, &d);
                for (v, bv) in b.iter_mut().enumerate() {
                    if v == s || v == t {
                        continue;
                    }
                    let through = paths.iter().filter(|p| p.contains(&v)).count();
                    *bv += through as f64 / paths.len() as f64;
                }
            }
        }
        let norm = ((self.n - 1) * (self.n - 2)) as f64 / 2.0;
        b.iter().map(|x| x / norm).collect()
    }

    pub fn clustering(&self) -> Vec<f64> {
        (0..self.n)
            .map(|v| {
                let k = self.degree(v);
                if k < 2 {
                    return 0.0;
                }
                let mut closed = 0;
                for a in 0..self.n {
                    for b in a + 1..self.n {
                        if self.adj[v][a] && self.adj[v][b] && self.adj[a][b] {
                            closed += 1;
                        }
                    }
                }
                closed as f64 / (k * (k - 1) / 2) as f64
            })
            .collect()
    }

    pub fn constraint(&self) -> Vec<f64> {
        let p: Vec<Vec<f64>> = (0..self.n)
            .map(|i| {
                let k = self.degree(i) as f64;
                (0..self.n)
                    .map(|j| if self.adj[i][j] { 1.0 / k } else { 0.0 })
                    .collect()
            })
            .collect();
        (0..self.n)
            .map(|i| {
                (0..self.n)
                    .filter(|&j| self.adj[i][j])
                    .map(|j| {
                        let indirect: f64 = (0..self.n)
                            .filter(|&q| q != i && q != j)
                            .map(|q| p[i][q] * p[q][j])
                            .sum();
                        (p[i][j] + indirect).powi(2)
                    })
                    .sum()
            })
            .collect()
    }
}

/// A random connected graph on 3..=max_nodes nodes.
pub fn random_connected(rng: &mut impl Rng, max_nodes: usize) -> (usize, Vec<(usize, usize)>) {
    loop {
        let n = rng.random_range(3..=max_nodes);
        let p = rng.random_range(0.2..0.8);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.random_bool(p) {
                    edges.push((u, v));
                }
            }
        }
        if Dense::new(n, &edges).connected() {
            return (n, edges);
        }
    }
}

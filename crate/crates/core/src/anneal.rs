//! Degree-preserving simulated annealing over regular graphs.
//!
//! The only move is a double-edge swap `(a,b),(c,d) -> (a,d),(c,b)`, so the
//! degree sequence of the start graph (a 19-regular ring lattice by default)
//! is preserved exactly. Swaps that would disconnect the graph are rejected
//! outright. The lattice is first scrambled by a short run of unconditional
//! swaps. The temperature then starts at a tenth of the mean absolute energy
//! change of a sample of random swaps and halves ten times over the rest of
//! the budget. The best graph seen, the lattice included, is returned.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::graph::{insert_sorted, remove_sorted, ring_lattice, Archetype, Graph, GraphError};
use crate::metrics;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TopologyObjective {
    MaxMaxCloseness,
    MinMaxCloseness,
    MinMeanBetweenness,
    MinMeanClustering,
    MaxMaxBetweenness,
    MaxMeanClustering,
    MaxMeanBetweenness,
    MaxVarConstraint,
}

impl TopologyObjective {
    pub const ALL: [TopologyObjective; 8] = [
        TopologyObjective::MaxMaxCloseness,
        TopologyObjective::MinMaxCloseness,
        TopologyObjective::MinMeanBetweenness,
        TopologyObjective::MinMeanClustering,
        TopologyObjective::MaxMaxBetweenness,
        TopologyObjective::MaxMeanClustering,
        TopologyObjective::MaxMeanBetweenness,
        TopologyObjective::MaxVarConstraint,
    ];

    pub fn maximize(self) -> bool {
        matches!(
            self,
            TopologyObjective::MaxMaxCloseness
                | TopologyObjective::MaxMaxBetweenness
                | TopologyObjective::MaxMeanClustering
                | TopologyObjective::MaxMeanBetweenness
                | TopologyObjective::MaxVarConstraint
        )
    }

    pub fn archetype(self) -> Archetype {
        match self {
            TopologyObjective::MaxMaxCloseness => Archetype::MaxMaxCloseness,
            TopologyObjective::MinMaxCloseness => Archetype::MinMaxCloseness,
            TopologyObjective::MinMeanBetweenness => Archetype::MinMeanBetweenness,
            TopologyObjective::MinMeanClustering => Archetype::MinMeanClustering,
            TopologyObjective::MaxMaxBetweenness => Archetype::MaxMaxBetweenness,
            TopologyObjective::MaxMeanClustering => Archetype::MaxMeanClustering,
            TopologyObjective::MaxMeanBetweenness => Archetype::MaxMeanBetweenness,
            TopologyObjective::MaxVarConstraint => Archetype::MaxVarConstraint,
        }
    }

    pub fn from_archetype(a: Archetype) -> Option<Self> {
        Self::ALL.iter().copied().find(|o| o.archetype() == a)
    }

    /// The targeted metric of a connected graph.
    pub fn score(self, g: &Graph) -> Result<f64, GraphError> {
        let m = metrics::metrics(g)?;
        Ok(match self {
            TopologyObjective::MaxMaxCloseness | TopologyObjective::MinMaxCloseness => {
                m.max_closeness
            }
            TopologyObjective::MinMeanBetweenness | TopologyObjective::MaxMeanBetweenness => {
                m.mean_betweenness
            }
            TopologyObjective::MinMeanClustering | TopologyObjective::MaxMeanClustering => {
                m.mean_clustering
            }
            TopologyObjective::MaxMaxBetweenness => m.max_betweenness,
            TopologyObjective::MaxVarConstraint => m.constraint_variance,
        })
    }
}

impl fmt::Display for TopologyObjective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.archetype().label())
    }
}

impl FromStr for TopologyObjective {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let a: Archetype = s.parse()?;
        Self::from_archetype(a).ok_or_else(|| GraphError::UnknownArchetype(s.into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnnealConfig {
    pub nodes: usize,
    pub degree: usize,
    pub seed: u64,
    /// Attempted swaps.
    pub budget: u64,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        AnnealConfig {
            nodes: 100,
            degree: 19,
            seed: 0,
            budget: 200_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnealReport {
    pub initial_score: f64,
    pub best_score: f64,
    pub accepted: u64,
    pub rejected_disconnecting: u64,
    pub rejected_invalid: u64,
}

/// Anneal a `degree`-regular graph towards `objective`.
/// Share of the budget spent on unconditional random swaps.
const SHUFFLE_FRACTION: u64 = 50;
/// Initial temperature relative to the mean |Δscore| of random swaps.
const TEMPERATURE_SCALE: f64 = 0.1;
/// Share of triangle-closing proposals when maximizing clustering.
const TARGETED_SHARE: f64 = 0.9;

pub fn optimize_topology(
    objective: TopologyObjective,
    cfg: &AnnealConfig,
) -> Result<Graph, GraphError> {
    optimize_topology_with_report(objective, cfg).map(|(g, _)| g)
}

pub fn optimize_topology_with_report(
    objective: TopologyObjective,
    cfg: &AnnealConfig,
) -> Result<(Graph, AnnealReport), GraphError> {
    if (cfg.nodes * cfg.degree) % 2 == 1 {
        return Err(GraphError::InfeasibleLattice {
            n: cfg.nodes,
            k: cfg.degree,
        });
    }
    let start = ring_lattice(cfg.nodes, cfg.degree)?;
    let mut rng = seed::rng(seed::derive(cfg.seed, &[objective as u64]));
    let mut state = SwapState::new(start);
    let sign = if objective.maximize() { -1.0 } else { 1.0 };
    let targeted = objective == TopologyObjective::MaxMeanClustering;

    let initial_score = state.score(objective);
    let mut best = (initial_score, state.graph.clone());
    let mut report = AnnealReport {
        initial_score,
        best_score: initial_score,
        accepted: 0,
        rejected_disconnecting: 0,
        rejected_invalid: 0,
    };

    // Randomize away from the lattice before cooling.
    let shuffle = cfg.budget / SHUFFLE_FRACTION;
    for _ in 0..shuffle {
        let Some(swap) = state.propose(&mut rng) else {
            report.rejected_invalid += 1;
            continue;
        };
        state.apply(&swap);
        if state.is_connected() {
            report.accepted += 1;
        } else {
            state.revert(&swap);
            report.rejected_disconnecting += 1;
        }
    }
    let mut score = state.score(objective);
    if sign * (score - best.0) < 0.0 {
        best = (score, state.graph.clone());
    }

    let remaining = cfg.budget - shuffle;
    let mut temperature = TEMPERATURE_SCALE * calibrate_temperature(&mut state, objective, &mut rng);
    let plateau = (remaining / 10).max(1);
    for iter in 0..remaining {
        if iter > 0 && iter % plateau == 0 {
            temperature *= 0.5;
        }
        let proposal = if targeted && rng.random_bool(TARGETED_SHARE) {
            state.propose_closing(&mut rng)
        } else {
            state.propose(&mut rng)
        };
        let Some(swap) = proposal else {
            report.rejected_invalid += 1;
            continue;
        };
        state.apply(&swap);
        if !state.is_connected() {
            state.revert(&swap);
            report.rejected_disconnecting += 1;
            continue;
        }
        let candidate = state.score(objective);
        let delta = sign * (candidate - score);
        let accept = delta <= 0.0
            || (temperature > 0.0 && rng.random::<f64>() < libm::exp(-delta / temperature));
        if accept {
            score = candidate;
            report.accepted += 1;
            if sign * (score - best.0) < 0.0 {
                best = (score, state.graph.clone());
            }
        } else {
            state.revert(&swap);
        }
    }
    report.best_score = best.0;
    let graph = best
        .1
        .with_archetype(objective.archetype())
        .with_seed(cfg.seed);
    if !graph.is_connected() {
        return Err(GraphError::BudgetExhausted);
    }
    Ok((graph, report))
}

fn calibrate_temperature(
    state: &mut SwapState,
    objective: TopologyObjective,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let base = state.score(objective);
    let mut total = 0.0;
    let mut count = 0u32;
    for _ in 0..400 {
        if count >= 50 {
            break;
        }
        let Some(swap) = state.propose(rng) else {
            continue;
        };
        state.apply(&swap);
        if state.is_connected() {
            total += libm::fabs(state.score(objective) - base);
            count += 1;
        }
        state.revert(&swap);
    }
    if count == 0 {
        0.0
    } else {
        total / f64::from(count)
    }
}

const TOURNAMENT: usize = 3;


#[derive(Debug, Clone, Copy)]
struct Swap {
    first: usize,
    second: usize,
    old: [(usize, usize); 2],
    new: [(usize, usize); 2],
}

/// Mutable graph with bitset rows for fast neighbourhood intersections.
struct SwapState {
    graph: Graph,
    rows: Vec<Vec<u64>>,
    edges: Vec<(usize, usize)>,
    /// Index into `edges` for each present pair, row-major over `n × n`.
    slots: Vec<u32>,
    inv_pairs: Vec<f64>,
    /// Σ_i local clustering, maintained incrementally across swaps.
    clustering_sum: f64,
}

impl SwapState {
    fn new(graph: Graph) -> Self {
        let n = graph.node_count();
        let words = n.div_ceil(64);
        let mut rows = vec![vec![0u64; words]; n];
        for (u, v) in graph.edges() {
            rows[u][v / 64] |= 1 << (v % 64);
            rows[v][u / 64] |= 1 << (u % 64);
        }
        let inv_pairs = graph
            .degrees()
            .map(|k| {
                if k < 2 {
                    0.0
                } else {
                    2.0 / (k * (k - 1)) as f64
                }
            })
            .collect();
        let clustering_sum = metrics::clustering(&graph).iter().sum();
        let edges: Vec<(usize, usize)> = graph.edges().collect();
        let mut slots = vec![u32::MAX; n * n];
        for (i, &(u, v)) in edges.iter().enumerate() {
            slots[u * n + v] = i as u32;
            slots[v * n + u] = i as u32;
        }
        SwapState {
            graph,
            rows,
            edges,
            slots,
            inv_pairs,
            clustering_sum,
        }
    }

    fn has(&self, u: usize, v: usize) -> bool {
        self.rows[u][v / 64] & (1 << (v % 64)) != 0
    }

    fn propose(&self, rng: &mut ChaCha8Rng) -> Option<Swap> {
        let m = self.edges.len();
        let first = rng.random_range(0..m);
        let second = rng.random_range(0..m);
        if first == second {
            return None;
        }
        let (a, b) = self.edges[first];
        let (mut c, mut d) = self.edges[second];
        if rng.random_bool(0.5) {
            core::mem::swap(&mut c, &mut d);
        }
        if a == c || a == d || b == c || b == d || self.has(a, d) || self.has(c, b) {
            return None;
        }
        Some(Swap {
            first,
            second,
            old: [(a, b), (c, d)],
            new: [(a, d), (c, b)],
        })
    }

    fn common(&self, u: usize, v: usize) -> u32 {
        self.rows[u].iter().zip(&self.rows[v]).map(|(x, y)| (x & y).count_ones()).sum()
    }

    /// Of a few random neighbours of `v`, the one sharing the fewest
    /// neighbours with it.
    fn weak_neighbor(&self, rng: &mut ChaCha8Rng, v: usize) -> usize {
        let nb = self.graph.neighbors(v);
        (0..TOURNAMENT)
            .map(|_| nb[rng.random_range(0..nb.len())])
            .min_by_key(|&u| self.common(u, v))
            .expect("tournament is non-empty")
    }

    /// A swap that joins a random node to one of its two-hop neighbours,
    /// dropping weakly embedded edges at both ends.
    fn propose_closing(&self, rng: &mut ChaCha8Rng) -> Option<Swap> {
        let n = self.rows.len();
        let a = rng.random_range(0..n);
        let nb = self.graph.neighbors(a);
        let x = nb[rng.random_range(0..nb.len())];
        let nb = self.graph.neighbors(x);
        let d = nb[rng.random_range(0..nb.len())];
        if d == a || self.has(a, d) {
            return None;
        }
        let b = self.weak_neighbor(rng, a);
        let c = self.weak_neighbor(rng, d);
        if b == d || c == a || c == b || self.has(c, b) {
            return None;
        }
        Some(Swap {
            first: self.slots[a * n + b] as usize,
            second: self.slots[c * n + d] as usize,
            old: [(a, b), (c, d)],
            new: [(a, d), (c, b)],
        })
    }

    fn set_slot(&mut self, (u, v): (usize, usize), index: usize) {
        let n = self.rows.len();
        self.edges[index] = (u, v);
        self.slots[u * n + v] = index as u32;
        self.slots[v * n + u] = index as u32;
    }

    fn triangle_weight(&self, u: usize, v: usize) -> f64 {
        let mut total = 0.0;
        for (w, (x, y)) in self.rows[u].iter().zip(&self.rows[v]).enumerate() {
            let mut bits = x & y;
            while bits != 0 {
                let t = w * 64 + bits.trailing_zeros() as usize;
                total += self.inv_pairs[u] + self.inv_pairs[v] + self.inv_pairs[t];
                bits &= bits - 1;
            }
        }
        total
    }

    fn set_edge(&mut self, u: usize, v: usize, present: bool) {
        let adj = self.graph.adjacency_mut();
        if present {
            self.rows[u][v / 64] |= 1 << (v % 64);
            self.rows[v][u / 64] |= 1 << (u % 64);
            insert_sorted(&mut adj[u], v);
            insert_sorted(&mut adj[v], u);
        } else {
            self.rows[u][v / 64] &= !(1 << (v % 64));
            self.rows[v][u / 64] &= !(1 << (u % 64));
            remove_sorted(&mut adj[u], v);
            remove_sorted(&mut adj[v], u);
        }
    }

    fn remove(&mut self, (u, v): (usize, usize)) {
        self.clustering_sum -= self.triangle_weight(u, v);
        self.set_edge(u, v, false);
    }

    fn add(&mut self, (u, v): (usize, usize)) {
        self.set_edge(u, v, true);
        self.clustering_sum += self.triangle_weight(u, v);
    }

    fn apply(&mut self, s: &Swap) {
        self.remove(s.old[0]);
        self.remove(s.old[1]);
        self.add(s.new[0]);
        self.add(s.new[1]);
        self.set_slot(s.new[0], s.first);
        self.set_slot(s.new[1], s.second);
    }

    fn revert(&mut self, s: &Swap) {
        self.remove(s.new[0]);
        self.remove(s.new[1]);
        self.add(s.old[0]);
        self.add(s.old[1]);
        self.set_slot(s.old[0], s.first);
        self.set_slot(s.old[1], s.second);
    }

    fn is_connected(&self) -> bool {
        let n = self.rows.len();
        let words = self.rows[0].len();
        let mut seen = vec![0u64; words];
        let mut frontier = vec![0u64; words];
        seen[0] = 1;
        frontier[0] = 1;
        let mut next = vec![0u64; words];
        loop {
            next.fill(0);
            for (w, &bits) in frontier.iter().enumerate() {
                let mut bits = bits;
                while bits != 0 {
                    let u = w * 64 + bits.trailing_zeros() as usize;
                    for (nx, r) in next.iter_mut().zip(&self.rows[u]) {
                        *nx |= r;
                    }
                    bits &= bits - 1;
                }
            }
            let mut grew = false;
            for ((nx, s), f) in next.iter().zip(seen.iter_mut()).zip(frontier.iter_mut()) {
                *f = nx & !*s;
                *s |= *f;
                grew |= *f != 0;
            }
            if !grew {
                break;
            }
        }
        seen.iter().map(|w| w.count_ones() as usize).sum::<usize>() == n
    }

    /// Per-source (eccentricity, Σ distance) via bitset BFS.
    fn distance_profile(&self) -> Vec<(usize, usize)> {
        let n = self.rows.len();
        let words = self.rows[0].len();
        let mut out = Vec::with_capacity(n);
        let mut seen = vec![0u64; words];
        let mut frontier = vec![0u64; words];
        let mut next = vec![0u64; words];
        for s in 0..n {
            seen.fill(0);
            frontier.fill(0);
            seen[s / 64] |= 1 << (s % 64);
            frontier[s / 64] |= 1 << (s % 64);
            let (mut level, mut total) = (0usize, 0usize);
            loop {
                next.fill(0);
                for (w, &bits) in frontier.iter().enumerate() {
                    let mut bits = bits;
                    while bits != 0 {
                        let u = w * 64 + bits.trailing_zeros() as usize;
                        for (nx, r) in next.iter_mut().zip(&self.rows[u]) {
                            *nx |= r;
                        }
                        bits &= bits - 1;
                    }
                }
                let mut reached = 0usize;
                for ((nx, sn), f) in next.iter().zip(seen.iter_mut()).zip(frontier.iter_mut()) {
                    *f = nx & !*sn;
                    *sn |= *f;
                    reached += f.count_ones() as usize;
                }
                if reached == 0 {
                    break;
                }
                level += 1;
                total += level * reached;
            }
            out.push((level, total));
        }
        out
    }

    fn score(&self, objective: TopologyObjective) -> f64 {
        let n = self.rows.len();
        match objective {
            TopologyObjective::MinMeanClustering | TopologyObjective::MaxMeanClustering => {
                self.clustering_sum / n as f64
            }
            TopologyObjective::MaxMaxCloseness | TopologyObjective::MinMaxCloseness => self
                .distance_profile()
                .iter()
                .map(|&(_, total)| (n - 1) as f64 / total as f64)
                .fold(f64::MIN, f64::max),
            TopologyObjective::MinMeanBetweenness | TopologyObjective::MaxMeanBetweenness => {
                // Σ_v B(v) over unordered pairs equals Σ_{s<t} (d(s,t) - 1)
                let ordered: usize = self.distance_profile().iter().map(|p| p.1).sum();
                let pairs = (n * (n - 1) / 2) as f64;
                let excess = ordered as f64 / 2.0 - pairs;
                excess / (n as f64 * ((n - 1) * (n - 2)) as f64 / 2.0)
            }
            TopologyObjective::MaxMaxBetweenness => metrics::betweenness(&self.graph)
                .into_iter()
                .fold(f64::MIN, f64::max),
            TopologyObjective::MaxVarConstraint => {
                let c = metrics::constraint(&self.graph);
                let mean = c.iter().sum::<f64>() / n as f64;
                c.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64
            }
        }
    }
}

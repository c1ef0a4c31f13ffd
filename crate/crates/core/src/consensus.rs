//! Asynchronous binary-opinion dynamics on a fixed graph.
//!
//! One update picks a node uniformly at random and lets the bound agent
//! re-decide given its neighbours' split. A population cycle is `N` updates.
//! Unanimity is checked after every update; the reported cycle count is
//! `ceil(updates / N)` at the moment unanimity is reached.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::agents::{Agent, AgentError, Answer, DecisionContext, Ordering, PeerSummary, TrialKey};
use crate::catalog::PromptSpec;
use crate::flip::OrderingPolicy;
use crate::graph::Graph;
use crate::seed;

const SEEDING_STREAM: u64 = 1;
const DYNAMICS_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConsensusError {
    #[error("minority fraction {fraction} on {nodes} nodes is infeasible (need 0 < f < 0.5 and a non-empty minority)")]
    InfeasibleFraction { fraction: f64, nodes: usize },
    #[error("node {0} has no neighbours")]
    IsolatedNode(usize),
    #[error("answers cover {got} nodes, graph has {expected}")]
    StateSize { expected: usize, got: usize },
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
}

/// Which answer the seeded minority holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scenario {
    MinorityNo,
    MinorityYes,
}

impl Scenario {
    pub const BOTH: [Scenario; 2] = [Scenario::MinorityNo, Scenario::MinorityYes];

    pub fn minority(self) -> Answer {
        match self {
            Scenario::MinorityNo => Answer::No,
            Scenario::MinorityYes => Answer::Yes,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Scenario::MinorityNo => "minority_no",
            Scenario::MinorityYes => "minority_yes",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scenario {
    type Err = ConsensusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::BOTH
            .into_iter()
            .find(|x| x.label() == s)
            .ok_or_else(|| ConsensusError::UnknownScenario(s.into()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState<'g> {
    graph: &'g Graph,
    answers: Vec<Answer>,
    yes_count: usize,
    updates: u64,
    run_id: String,
}

impl<'g> NetworkState<'g> {
    pub fn new(graph: &'g Graph, answers: Vec<Answer>) -> Result<Self, ConsensusError> {
        if answers.len() != graph.node_count() {
            return Err(ConsensusError::StateSize {
                expected: graph.node_count(),
                got: answers.len(),
            });
        }
        let yes_count = answers.iter().filter(|&&a| a == Answer::Yes).count();
        Ok(NetworkState {
            graph,
            answers,
            yes_count,
            updates: 0,
            run_id: String::new(),
        })
    }

    /// Label used to build cache keys for the decisions of this run.
    pub fn with_run_id(mut self, run_id: String) -> Self {
        self.run_id = run_id;
        self
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn answers(&self) -> &[Answer] {
        &self.answers
    }

    pub fn yes_count(&self) -> usize {
        self.yes_count
    }

    pub fn update_counter(&self) -> u64 {
        self.updates
    }

    pub fn cycle_counter(&self) -> u64 {
        self.updates / self.answers.len() as u64
    }

    pub fn is_unanimous(&self) -> bool {
        self.yes_count == 0 || self.yes_count == self.answers.len()
    }

    /// The answer held by a strict majority, if any.
    pub fn majority(&self) -> Option<Answer> {
        let no = self.answers.len() - self.yes_count;
        match self.yes_count.cmp(&no) {
            core::cmp::Ordering::Greater => Some(Answer::Yes),
            core::cmp::Ordering::Less => Some(Answer::No),
            core::cmp::Ordering::Equal => None,
        }
    }

    fn set(&mut self, node: usize, answer: Answer) {
        let old = core::mem::replace(&mut self.answers[node], answer);
        match (old, answer) {
            (Answer::No, Answer::Yes) => self.yes_count += 1,
            (Answer::Yes, Answer::No) => self.yes_count -= 1,
            _ => {}
        }
    }
}

/// Assign `round(fraction * n)` uniformly chosen nodes the minority answer
/// and everyone else its negation.
pub fn seed_state<'g>(
    graph: &'g Graph,
    fraction: f64,
    minority: Answer,
    seed: u64,
) -> Result<NetworkState<'g>, ConsensusError> {
    let n = graph.node_count();
    let infeasible = ConsensusError::InfeasibleFraction {
        fraction,
        nodes: n,
    };
    if !(fraction > 0.0 && fraction < 0.5) {
        return Err(infeasible);
    }
    let count = libm::round(fraction * n as f64) as usize;
    if count == 0 || 2 * count >= n {
        return Err(infeasible);
    }
    let mut answers = alloc::vec![minority.negate(); n];
    let mut rng = seed::rng(seed::derive(seed, &[SEEDING_STREAM]));
    for node in rand::seq::index::sample(&mut rng, n, count) {
        answers[node] = minority;
    }
    NetworkState::new(graph, answers)
}

/// The peer split around `node`, from exact neighbour counts.
pub fn neighbor_summary(state: &NetworkState<'_>, node: usize) -> Result<PeerSummary, ConsensusError> {
    let neighbors = state.graph.neighbors(node);
    if neighbors.is_empty() {
        return Err(ConsensusError::IsolatedNode(node));
    }
    let mine = state.answers[node];
    let opposite = neighbors.iter().filter(|&&v| state.answers[v] != mine).count();
    Ok(PeerSummary::from_counts(neighbors.len() as u32, opposite as u32)?)
}

/// What the agent is asked during consensus runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusSettings {
    pub question: String,
    pub spec: Option<PromptSpec>,
    pub ordering: OrderingPolicy,
    pub max_cycles: u32,
    pub minority_fraction: f64,
}

impl ConsensusSettings {
    pub fn new(question: impl Into<String>, spec: Option<PromptSpec>) -> Self {
        ConsensusSettings {
            question: question.into(),
            spec,
            ordering: OrderingPolicy::Random,
            max_cycles: 25,
            minority_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    pub node: usize,
    pub before: Answer,
    pub after: Answer,
    /// The agent produced no valid answer; the node kept its answer.
    pub failed: bool,
}

/// One asynchronous update.
pub fn step_async<A: Agent + ?Sized>(
    state: &mut NetworkState<'_>,
    agent: &A,
    settings: &ConsensusSettings,
    rng: &mut ChaCha8Rng,
) -> Result<StepOutcome, ConsensusError> {
    let n = state.answers.len();
    let node = rng.random_range(0..n);
    let peers = neighbor_summary(state, node)?;
    let decision_seed: u64 = rng.random();
    let ordering = match settings.ordering {
        OrderingPolicy::Alternate if state.updates.is_multiple_of(2) => Ordering::YesFirst,
        OrderingPolicy::Alternate => Ordering::NoFirst,
        OrderingPolicy::Random if decision_seed >> 63 == 0 => Ordering::YesFirst,
        OrderingPolicy::Random => Ordering::NoFirst,
    };
    let before = state.answers[node];
    let trial = (!state.run_id.is_empty()).then(|| TrialKey {
        scenario: format!("consensus/{}", state.run_id),
        repetition: state.updates as u32,
    });
    let ctx = DecisionContext {
        question: &settings.question,
        spec: settings.spec,
        current: before,
        peers,
        ordering,
        rng_seed: decision_seed,
        trial,
    };
    let (after, failed) = match agent.decide(&ctx) {
        Ok(a) => (a, false),
        Err(e) if e.is_trial_failure() => (before, true),
        Err(e) => return Err(e.into()),
    };
    state.set(node, after);
    state.updates += 1;
    Ok(StepOutcome {
        node,
        before,
        after,
        failed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusOutcome {
    pub topology: String,
    pub scenario: Scenario,
    pub seed: u64,
    pub reached: bool,
    pub cycles_to_consensus: Option<u32>,
    pub updates: u64,
    pub final_yes: usize,
    pub final_majority: Option<Answer>,
    pub failed_decisions: u64,
}

/// Iterate from an explicit state until unanimity or the cycle cap.
pub fn run_from_state<'g, A: Agent + ?Sized>(
    mut state: NetworkState<'g>,
    agent: &A,
    settings: &ConsensusSettings,
    rng: &mut ChaCha8Rng,
) -> Result<(NetworkState<'g>, Option<u32>, u64), ConsensusError> {
    let n = state.answers.len() as u64;
    let cap = u64::from(settings.max_cycles) * n;
    let mut failed = 0;
    if state.is_unanimous() {
        return Ok((state, Some(0), 0));
    }
    while state.updates < cap {
        failed += u64::from(step_async(&mut state, agent, settings, rng)?.failed);
        if state.is_unanimous() {
            let cycles = state.updates.div_ceil(n) as u32;
            return Ok((state, Some(cycles), failed));
        }
    }
    Ok((state, None, failed))
}

pub fn run_consensus<A: Agent + ?Sized>(
    graph: &Graph,
    topology: &str,
    agent: &A,
    scenario: Scenario,
    settings: &ConsensusSettings,
    seed: u64,
) -> Result<ConsensusOutcome, ConsensusError> {
    let state = seed_state(graph, settings.minority_fraction, scenario.minority(), seed)?
        .with_run_id(format!("{topology}/{scenario}/{seed}"));
    let mut rng = seed::rng(seed::derive(seed, &[DYNAMICS_STREAM]));
    let (state, cycles, failed) = run_from_state(state, agent, settings, &mut rng)?;
    Ok(ConsensusOutcome {
        topology: topology.into(),
        scenario,
        seed,
        reached: cycles.is_some(),
        cycles_to_consensus: cycles,
        updates: state.update_counter(),
        final_yes: state.yes_count(),
        final_majority: state.majority(),
        failed_decisions: failed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub topology: String,
    pub scenario: Scenario,
    pub runs: usize,
    pub n_success: usize,
    pub success_rate: f64,
    /// Mean cycles over successful runs only.
    pub mean_cycles: Option<f64>,
    /// Standard error of that mean (sample sd / sqrt(n)); needs two successes.
    pub sem: Option<f64>,
}

pub fn summarize_cell(topology: &str, scenario: Scenario, outcomes: &[ConsensusOutcome]) -> CellSummary {
    let cycles: Vec<f64> = outcomes
        .iter()
        .filter_map(|o| o.cycles_to_consensus.map(f64::from))
        .collect();
    let k = cycles.len();
    let mean = (k > 0).then(|| cycles.iter().sum::<f64>() / k as f64);
    let sem = mean.filter(|_| k > 1).map(|m| {
        let var = cycles.iter().map(|c| (c - m) * (c - m)).sum::<f64>() / (k - 1) as f64;
        libm::sqrt(var) / libm::sqrt(k as f64)
    });
    CellSummary {
        topology: topology.into(),
        scenario,
        runs: outcomes.len(),
        n_success: k,
        success_rate: if outcomes.is_empty() {
            0.0
        } else {
            k as f64 / outcomes.len() as f64
        },
        mean_cycles: mean,
        sem,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub outcomes: Vec<ConsensusOutcome>,
    pub summary: Vec<CellSummary>,
}

/// Every topology × scenario × run. Run seeds derive from `master_seed`,
/// the topology label, the scenario and the run index.
pub fn run_scenario_suite<A: Agent + ?Sized>(
    topologies: &[(&str, &Graph)],
    agent: &A,
    settings: &ConsensusSettings,
    runs_per_cell: u32,
    master_seed: u64,
) -> Result<SuiteResult, ConsensusError> {
    let mut outcomes = Vec::new();
    let mut summary = Vec::new();
    for &(label, graph) in topologies {
        for scenario in Scenario::BOTH {
            let start = outcomes.len();
            for run in 0..runs_per_cell {
                let seed = seed::derive(
                    master_seed,
                    &[seed::label_coord(label), scenario as u64, u64::from(run)],
                );
                outcomes.push(run_consensus(graph, label, agent, scenario, settings, seed)?);
            }
            summary.push(summarize_cell(label, scenario, &outcomes[start..]));
        }
    }
    Ok(SuiteResult { outcomes, summary })
}

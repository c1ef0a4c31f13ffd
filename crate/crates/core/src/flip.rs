//! The agent-level peer-pressure grid.
//!
//! A grid is the product of question specs × initial stances × agreement
//! ratios × repetitions. Each trial is independent: the agent is told its
//! previous answer and the peer split, and its final answer is recorded.
//! Agreement ratios are configured as the prompt states them; records store
//! the complementary disagreement percent, which is what the analysis uses.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::agents::{Agent, AgentError, Answer, DecisionContext, Ordering, PeerSummary, TrialKey};
use crate::catalog::{Catalog, PromptSpec};
use crate::seed;

const ORDERING_STREAM: u64 = 0x006f_7264_6572; // "order"

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FlipError {
    #[error("invalid grid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("no valid trials in group")]
    EmptyGroup,
}

/// How the Yes/No option order is assigned to trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OrderingPolicy {
    /// Alternate by repetition so every cell splits as evenly as possible.
    #[default]
    Alternate,
    /// Independent fair coin per decision, derived from the trial seed.
    Random,
}

impl FromStr for OrderingPolicy {
    type Err = FlipError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "alternate" => Ok(OrderingPolicy::Alternate),
            "random" => Ok(OrderingPolicy::Random),
            _ => Err(FlipError::InvalidConfig(format!(
                "ordering policy must be `alternate` or `random`, got `{s}`"
            ))),
        }
    }
}

impl fmt::Display for OrderingPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OrderingPolicy::Alternate => "alternate",
            OrderingPolicy::Random => "random",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub specs: Vec<PromptSpec>,
    pub peer_count: u32,
    /// Percent of peers agreeing with the initial stance.
    pub agreement_ratios: Vec<u8>,
    pub repetitions: u32,
    pub initial_stances: Vec<Answer>,
    pub ordering: OrderingPolicy,
    pub master_seed: u64,
}

impl GridConfig {
    /// 10 peers, ratios 0, 10, …, 100, 30 repetitions, both stances.
    pub fn with_defaults(specs: Vec<PromptSpec>, master_seed: u64) -> Self {
        GridConfig {
            specs,
            peer_count: 10,
            agreement_ratios: (0..=100).step_by(10).collect(),
            repetitions: 30,
            initial_stances: Answer::BOTH.to_vec(),
            ordering: OrderingPolicy::Alternate,
            master_seed,
        }
    }

    pub fn validate(&self) -> Result<(), FlipError> {
        let bad = |msg: &str| Err(FlipError::InvalidConfig(msg.into()));
        if self.specs.is_empty() {
            return bad("at least one prompt spec is required");
        }
        if self.peer_count == 0 {
            return bad("peer_count must be positive");
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1");
        }
        if self.agreement_ratios.is_empty() {
            return bad("at least one agreement ratio is required");
        }
        if self.agreement_ratios.iter().any(|&r| r > 100) {
            return bad("agreement ratios must lie in [0, 100]");
        }
        if self.agreement_ratios.windows(2).any(|w| w[0] >= w[1]) {
            return bad("agreement ratios must be strictly increasing");
        }
        if self.initial_stances.is_empty() {
            return bad("at least one initial stance is required");
        }
        if self.initial_stances.len() == 2 && self.initial_stances[0] == self.initial_stances[1] {
            return bad("initial stances must be distinct");
        }
        if self.initial_stances.len() > 2 {
            return bad("at most two initial stances");
        }
        Ok(())
    }

    pub fn trial_count(&self) -> usize {
        self.specs.len()
            * self.initial_stances.len()
            * self.agreement_ratios.len()
            * self.repetitions as usize
    }

    /// Trials in canonical order: spec, stance, ratio, repetition.
    pub fn trials(&self) -> impl Iterator<Item = Trial> + '_ {
        self.specs.iter().flat_map(move |&spec| {
            self.initial_stances.iter().flat_map(move |&initial| {
                self.agreement_ratios.iter().flat_map(move |&agree| {
                    (0..self.repetitions).map(move |repetition| self.trial(spec, initial, agree, repetition))
                })
            })
        })
    }

    fn trial(&self, spec: PromptSpec, initial: Answer, agree: u8, repetition: u32) -> Trial {
        let disagree = 100 - agree;
        let cell = [
            spec.topic as u64,
            spec.layer as u64,
            spec.frame as u64,
            initial as u64,
            u64::from(self.peer_count),
            u64::from(disagree),
        ];
        let cell_seed = seed::derive(self.master_seed, &cell);
        let trial_seed = seed::derive(cell_seed, &[u64::from(repetition)]);
        let yes_first = match self.ordering {
            OrderingPolicy::Alternate => (u64::from(repetition) + (cell_seed & 1)).is_multiple_of(2),
            OrderingPolicy::Random => seed::derive(trial_seed, &[ORDERING_STREAM]) & 1 == 0,
        };
        Trial {
            spec,
            initial,
            peers: PeerSummary::from_agreement(self.peer_count, agree)
                .expect("validated ratio with positive peer count"),
            repetition,
            ordering: if yes_first {
                Ordering::YesFirst
            } else {
                Ordering::NoFirst
            },
            seed: trial_seed,
        }
    }
}

/// One fully specified decision of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trial {
    pub spec: PromptSpec,
    pub initial: Answer,
    pub peers: PeerSummary,
    pub repetition: u32,
    pub ordering: Ordering,
    pub seed: u64,
}

impl Trial {
    /// Identifies the (cell, repetition) pair independently of run order.
    pub fn key(&self) -> TrialKey {
        TrialKey {
            scenario: format!(
                "flip/{}/{}/{}/{}/n{}/d{}",
                self.spec.topic,
                self.spec.layer,
                self.spec.frame,
                self.initial,
                self.peers.peer_count(),
                self.peers.disagree_percent()
            ),
            repetition: self.repetition,
        }
    }

    pub fn context<'q>(&self, question: &'q str) -> DecisionContext<'q> {
        DecisionContext {
            question,
            spec: Some(self.spec),
            current: self.initial,
            peers: self.peers,
            ordering: self.ordering,
            rng_seed: self.seed,
            trial: Some(self.key()),
        }
    }

    pub fn record(&self, outcome: Option<Answer>) -> FlipRecord {
        FlipRecord {
            spec: self.spec,
            initial: self.initial,
            peer_count: self.peers.peer_count(),
            disagree_percent: self.peers.disagree_percent(),
            repetition: self.repetition,
            ordering: self.ordering,
            final_answer: outcome,
            flipped: outcome.is_some_and(|a| a != self.initial),
            failed: outcome.is_none(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlipRecord {
    pub spec: PromptSpec,
    pub initial: Answer,
    pub peer_count: u32,
    pub disagree_percent: u8,
    pub repetition: u32,
    pub ordering: Ordering,
    /// `None` when the trial failed.
    pub final_answer: Option<Answer>,
    pub flipped: bool,
    pub failed: bool,
}

/// Run one trial. Trial-level failures (no valid answer) become failed
/// records; any other agent error aborts.
pub fn run_trial<A: Agent + ?Sized>(
    trial: &Trial,
    catalog: &Catalog,
    agent: &A,
) -> Result<FlipRecord, FlipError> {
    let question = catalog.lookup(trial.spec);
    match agent.decide(&trial.context(question)) {
        Ok(answer) => Ok(trial.record(Some(answer))),
        Err(e) if e.is_trial_failure() => Ok(trial.record(None)),
        Err(e) => Err(e.into()),
    }
}

/// Run every trial of `cfg` in canonical order, handing records to `sink` as
/// they complete. Returns the number of records emitted. On error the records
/// already emitted stay valid.
pub fn run_flip_grid<A: Agent + ?Sized>(
    cfg: &GridConfig,
    catalog: &Catalog,
    agent: &A,
    mut sink: impl FnMut(FlipRecord),
) -> Result<usize, FlipError> {
    cfg.validate()?;
    let mut emitted = 0;
    for trial in cfg.trials() {
        sink(run_trial(&trial, catalog, agent)?);
        emitted += 1;
    }
    Ok(emitted)
}

/// Flip counts over a group of records, failed trials excluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FlipRate {
    pub flipped: u64,
    pub valid: u64,
    pub failed: u64,
}

impl FlipRate {
    pub fn rate(&self) -> f64 {
        self.flipped as f64 / self.valid as f64
    }

    pub fn merge(self, other: FlipRate) -> FlipRate {
        FlipRate {
            flipped: self.flipped + other.flipped,
            valid: self.valid + other.valid,
            failed: self.failed + other.failed,
        }
    }
}

pub fn flip_rate<'a>(records: impl IntoIterator<Item = &'a FlipRecord>) -> Result<FlipRate, FlipError> {
    let mut out = FlipRate::default();
    for r in records {
        if r.failed {
            out.failed += 1;
        } else {
            out.valid += 1;
            out.flipped += u64::from(r.flipped);
        }
    }
    if out.valid == 0 {
        Err(FlipError::EmptyGroup)
    } else {
        Ok(out)
    }
}

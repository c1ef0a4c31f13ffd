//! The decision contract shared by every agent kind, and the reference agents.
//!
//! An agent sees a question, its current answer and a summary of its peers,
//! and returns a final answer. Rule-based and stochastic agents here are pure
//! functions of the [`DecisionContext`] (randomness comes only from
//! `rng_seed`); LLM-backed agents implement the same trait elsewhere.

use alloc::collections::BTreeMap;
use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use rand::Rng;

use crate::catalog::{Frame, Layer, PromptSpec, Topic};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Answer {
    Yes,
    No,
}

impl Answer {
    pub const BOTH: [Answer; 2] = [Answer::Yes, Answer::No];

    pub fn negate(self) -> Answer {
        match self {
            Answer::Yes => Answer::No,
            Answer::No => Answer::Yes,
        }
    }

    /// `+1` for Yes, `-1` for No.
    pub fn spin(self) -> i8 {
        match self {
            Answer::Yes => 1,
            Answer::No => -1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Answer::Yes => "Yes",
            Answer::No => "No",
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Answer {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Yes" | "yes" => Ok(Answer::Yes),
            "No" | "no" => Ok(Answer::No),
            _ => Err(AgentError::Parse(s.into())),
        }
    }
}

/// Strict parse of a model's reply.
///
/// The trimmed reply must be `yes` or `no` (any case), optionally followed by
/// ASCII punctuation. Anything else is invalid (`None`).
pub fn parse_answer(raw: &str) -> Option<Answer> {
    let word = raw
        .trim()
        .trim_end_matches(|c: char| c.is_ascii_punctuation())
        .trim_end();
    if word.eq_ignore_ascii_case("yes") {
        Some(Answer::Yes)
    } else if word.eq_ignore_ascii_case("no") {
        Some(Answer::No)
    } else {
        None
    }
}

/// Which option the instruction line names first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Ordering {
    YesFirst,
    NoFirst,
}

impl Ordering {
    pub fn label(self) -> &'static str {
        match self {
            Ordering::YesFirst => "yes_first",
            Ordering::NoFirst => "no_first",
        }
    }
}

impl fmt::Display for Ordering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Ordering {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "yes_first" => Ok(Ordering::YesFirst),
            "no_first" => Ok(Ordering::NoFirst),
            _ => Err(AgentError::Parse(s.into())),
        }
    }
}

/// Peer influence as the prompt states it: a head count and two integer
/// percentages that always sum to 100.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PeerSummary {
    peer_count: u32,
    agree_percent: u8,
}

/// Integer percent of `part / whole`, rounding halves away from zero.
fn round_percent(part: u32, whole: u32) -> u32 {
    (200 * part + whole) / (2 * whole)
}

impl PeerSummary {
    pub fn from_agreement(peer_count: u32, agree_percent: u8) -> Result<Self, AgentError> {
        if peer_count == 0 {
            return Err(AgentError::NoPeers);
        }
        if agree_percent > 100 {
            return Err(AgentError::PercentOutOfRange(agree_percent));
        }
        Ok(PeerSummary {
            peer_count,
            agree_percent,
        })
    }

    /// From exact neighbour counts. Each share is rounded half away from
    /// zero; if the two then fail to sum to 100 the larger share absorbs the
    /// difference.
    pub fn from_counts(peer_count: u32, opposite: u32) -> Result<Self, AgentError> {
        if peer_count == 0 {
            return Err(AgentError::NoPeers);
        }
        if opposite > peer_count {
            return Err(AgentError::CountOutOfRange {
                opposite,
                peer_count,
            });
        }
        let mut disagree = round_percent(opposite, peer_count) as i32;
        let mut agree = round_percent(peer_count - opposite, peer_count) as i32;
        let excess = agree + disagree - 100;
        if agree >= disagree {
            agree -= excess;
        } else {
            disagree -= excess;
        }
        debug_assert_eq!(agree + disagree, 100);
        Ok(PeerSummary {
            peer_count,
            agree_percent: agree as u8,
        })
    }

    pub fn peer_count(&self) -> u32 {
        self.peer_count
    }

    pub fn agree_percent(&self) -> u8 {
        self.agree_percent
    }

    pub fn disagree_percent(&self) -> u8 {
        100 - self.agree_percent
    }
}

/// Identifies one cached decision: a scenario and the repetition within it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TrialKey {
    pub scenario: String,
    pub repetition: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionContext<'a> {
    pub question: &'a str,
    /// Catalog coordinates of `question`, when it came from the catalog.
    pub spec: Option<PromptSpec>,
    pub current: Answer,
    pub peers: PeerSummary,
    pub ordering: Ordering,
    pub rng_seed: u64,
    pub trial: Option<TrialKey>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AgentError {
    #[error("peer summary needs at least one peer")]
    NoPeers,
    #[error("percentage {0} exceeds 100")]
    PercentOutOfRange(u8),
    #[error("{opposite} opposing peers out of {peer_count}")]
    CountOutOfRange { opposite: u32, peer_count: u32 },
    #[error("cannot parse `{0}`")]
    Parse(String),
    #[error("replay fixture has no cell for {0}")]
    MissingFixtureCell(String),
    #[error("replay agent needs catalog coordinates for the question")]
    MissingSpec,
    #[error("no valid answer after {attempts} attempts")]
    NoValidAnswer { attempts: u32 },
    #[error("transport failure: {0}")]
    Transport(String),
}

impl AgentError {
    /// Errors that mark one trial as failed rather than aborting a run.
    pub fn is_trial_failure(&self) -> bool {
        matches!(self, AgentError::NoValidAnswer { .. })
    }
}

pub trait Agent {
    fn decide(&self, ctx: &DecisionContext<'_>) -> Result<Answer, AgentError>;

    /// Recorded alongside results (model name for LLM agents).
    fn name(&self) -> String;
}

impl<A: Agent + ?Sized> Agent for &A {
    fn decide(&self, ctx: &DecisionContext<'_>) -> Result<Answer, AgentError> {
        (**self).decide(ctx)
    }

    fn name(&self) -> String {
        (**self).name()
    }
}

/// Majority Vote Model baseline: flip iff strictly more than half the peers
/// disagree. An exact 50/50 split keeps the current answer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MajorityRule;

impl MajorityRule {
    pub fn decide_pure(current: Answer, peers: &PeerSummary) -> Answer {
        if peers.disagree_percent() > 50 {
            current.negate()
        } else {
            current
        }
    }
}

impl Agent for MajorityRule {
    fn decide(&self, ctx: &DecisionContext<'_>) -> Result<Answer, AgentError> {
        Ok(Self::decide_pure(ctx.current, &ctx.peers))
    }

    fn name(&self) -> String {
        "majority".into()
    }
}

fn bernoulli(seed: u64, p: f64) -> bool {
    seed::rng(seed).random::<f64>() < p
}

/// Flips with a logistic probability in peer disagreement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticAgent {
    /// Disagreement percent at which the flip probability is one half.
    pub theta: f64,
    /// Width of the transition, in percent.
    pub scale: f64,
}

impl LogisticAgent {
    pub fn new(theta: f64, scale: f64) -> Result<Self, AgentError> {
        if scale > 0.0 && scale.is_finite() && theta.is_finite() {
            Ok(LogisticAgent { theta, scale })
        } else {
            Err(AgentError::Parse(alloc::format!(
                "logistic agent needs finite theta and scale > 0 (theta={theta}, scale={scale})"
            )))
        }
    }

    pub fn flip_probability(&self, disagree_percent: f64) -> f64 {
        1.0 / (1.0 + libm::exp(-(disagree_percent - self.theta) / self.scale))
    }
}

impl Agent for LogisticAgent {
    fn decide(&self, ctx: &DecisionContext<'_>) -> Result<Answer, AgentError> {
        let p = self.flip_probability(f64::from(ctx.peers.disagree_percent()));
        Ok(if bernoulli(ctx.rng_seed, p) {
            ctx.current.negate()
        } else {
            ctx.current
        })
    }

    fn name(&self) -> String {
        alloc::format!("logistic(theta={},scale={})", self.theta, self.scale)
    }
}

/// Flip probabilities keyed by (topic, layer, frame, initial answer,
/// disagreement percent).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayFixture {
    cells: BTreeMap<(Topic, Layer, Frame, Answer, u8), f64>,
}

impl ReplayFixture {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, spec: PromptSpec, initial: Answer, disagree_percent: u8, p: f64) {
        self.cells.insert(
            (spec.topic, spec.layer, spec.frame, initial, disagree_percent),
            p.clamp(0.0, 1.0),
        );
    }

    pub fn get(&self, spec: PromptSpec, initial: Answer, disagree_percent: u8) -> Option<f64> {
        self.cells
            .get(&(spec.topic, spec.layer, spec.frame, initial, disagree_percent))
            .copied()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (PromptSpec, Answer, u8, f64)> + '_ {
        self.cells.iter().map(|(&(topic, layer, frame, initial, d), &p)| {
            (PromptSpec::new(topic, layer, frame), initial, d, p)
        })
    }
}

/// Plays back a [`ReplayFixture`] as seeded Bernoulli draws.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayAgent {
    pub fixture: ReplayFixture,
}

impl Agent for ReplayAgent {
    fn decide(&self, ctx: &DecisionContext<'_>) -> Result<Answer, AgentError> {
        let spec = ctx.spec.ok_or(AgentError::MissingSpec)?;
        let d = ctx.peers.disagree_percent();
        let p = self.fixture.get(spec, ctx.current, d).ok_or_else(|| {
            AgentError::MissingFixtureCell(alloc::format!("{spec} initial={} d={d}", ctx.current))
        })?;
        Ok(if bernoulli(ctx.rng_seed, p) {
            ctx.current.negate()
        } else {
            ctx.current
        })
    }

    fn name(&self) -> String {
        "replay".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn ctx(current: Answer, agree: u8, seed: u64) -> DecisionContext<'static> {
        DecisionContext {
            question: "q?",
            spec: Some(PromptSpec::new(Topic::GreenEnergy, Layer::Values, Frame::Moral)),
            current,
            peers: PeerSummary::from_agreement(10, agree).unwrap(),
            ordering: Ordering::YesFirst,
            rng_seed: seed,
            trial: None,
        }
    }

    #[test]
    fn majority_rule_cases() {
        assert_eq!(MajorityRule.decide(&ctx(Answer::Yes, 30, 0)).unwrap(), Answer::No);
        assert_eq!(MajorityRule.decide(&ctx(Answer::Yes, 70, 0)).unwrap(), Answer::Yes);
        assert_eq!(MajorityRule.decide(&ctx(Answer::No, 50, 0)).unwrap(), Answer::No);
    }

    #[test]
    fn negation_is_involution() {
        for a in Answer::BOTH {
            assert_eq!(a.negate().negate(), a);
            assert_ne!(a.negate(), a);
        }
        assert_eq!(Answer::Yes.spin(), 1);
        assert_eq!(Answer::No.spin(), -1);
    }

    #[test]
    fn parse_answer_rules() {
        assert_eq!(parse_answer("Yes"), Some(Answer::Yes));
        assert_eq!(parse_answer(" no.\n"), Some(Answer::No));
        assert_eq!(parse_answer("YES!!"), Some(Answer::Yes));
        assert_eq!(parse_answer("I think yes"), None);
        assert_eq!(parse_answer("Yes, because"), None);
        assert_eq!(parse_answer(""), None);
        assert_eq!(parse_answer("\"No\""), None);
    }

    #[test]
    fn summary_from_counts() {
        let s = PeerSummary::from_counts(10, 7).unwrap();
        assert_eq!((s.peer_count(), s.agree_percent(), s.disagree_percent()), (10, 30, 70));
        let s = PeerSummary::from_counts(19, 9).unwrap();
        assert_eq!((s.disagree_percent(), s.agree_percent()), (47, 53));
        assert_eq!(PeerSummary::from_counts(0, 0), Err(AgentError::NoPeers));
        // both halves round up: 12.5 / 87.5 -> 13 / 88, larger share repaired
        let s = PeerSummary::from_counts(8, 1).unwrap();
        assert_eq!((s.disagree_percent(), s.agree_percent()), (13, 87));
    }

    #[test]
    fn logistic_closed_forms() {
        let a = LogisticAgent::new(70.0, 5.0).unwrap();
        assert_eq!(a.flip_probability(70.0), 0.5);
        let expected = 1.0 / (1.0 + libm::exp(-6.0));
        assert!((a.flip_probability(100.0) - expected).abs() < 1e-15);
        assert!((a.flip_probability(100.0) - 0.9975).abs() < 1e-4);
        assert!(LogisticAgent::new(70.0, 0.0).is_err());
    }

    #[test]
    fn logistic_monte_carlo_rate() {
        let a = LogisticAgent::new(70.0, 5.0).unwrap();
        let flips = (0..10_000u64)
            .filter(|&s| a.decide(&ctx(Answer::Yes, 20, seed::derive(5, &[s]))).unwrap() == Answer::No)
            .count();
        let rate = flips as f64 / 10_000.0;
        assert!((rate - 0.881).abs() < 0.01, "rate {rate}");
    }

    #[test]
    fn replay_extremes() {
        let spec = PromptSpec::new(Topic::GreenEnergy, Layer::Values, Frame::Moral);
        let mut fx = ReplayFixture::new();
        fx.insert(spec, Answer::Yes, 70, 0.0);
        fx.insert(spec, Answer::Yes, 80, 1.0);
        let agent = ReplayAgent { fixture: fx };
        let kept: Vec<_> = (0..50).map(|s| agent.decide(&ctx(Answer::Yes, 30, s)).unwrap()).collect();
        assert!(kept.iter().all(|&a| a == Answer::Yes));
        let flipped: Vec<_> = (0..50).map(|s| agent.decide(&ctx(Answer::Yes, 20, s)).unwrap()).collect();
        assert!(flipped.iter().all(|&a| a == Answer::No));
        assert!(matches!(
            agent.decide(&ctx(Answer::No, 20, 0)),
            Err(AgentError::MissingFixtureCell(_))
        ));
        let mut no_spec = ctx(Answer::Yes, 20, 0);
        no_spec.spec = None;
        assert_eq!(agent.decide(&no_spec), Err(AgentError::MissingSpec));
    }
}

//! Peer-pressure opinion dynamics without an operating system.
//!
//! Everything in this crate is a pure function of its inputs and an explicit
//! seed: graph construction and measurement, degree-preserving topology
//! annealing, decision agents, the question catalog and prompt renderer, the
//! flip-threshold grid, asynchronous consensus dynamics and the threshold
//! analysis. File formats, network transports and the command line live in
//! the `peerflip` companion crate.
#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod agents;
pub mod analysis;
pub mod anneal;
pub mod catalog;
pub mod consensus;
pub mod flip;
pub mod graph;
pub mod metrics;
pub mod seed;

pub use agents::{
    parse_answer, Agent, AgentError, Answer, DecisionContext, LogisticAgent, MajorityRule,
    Ordering, PeerSummary, ReplayAgent, ReplayFixture, TrialKey,
};
pub use analysis::{Crossing, CurveKey, FlipCurve, Hierarchy, ThresholdResult};
pub use anneal::{optimize_topology, AnnealConfig, TopologyObjective};
pub use catalog::{render_prompt, Catalog, Frame, Layer, PromptSpec, Topic};
pub use consensus::{ConsensusOutcome, ConsensusSettings, NetworkState, Scenario};
pub use flip::{FlipRecord, GridConfig, OrderingPolicy, Trial};
pub use graph::{complete_graph, ring_lattice, watts_strogatz, Archetype, Graph, GraphError};
pub use metrics::{metrics, GraphMetrics, NodeMetrics};

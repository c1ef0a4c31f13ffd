//! The pipeline stages behind each subcommand.

use std::collections::{BTreeSet, HashSet};
use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use peerflip_core::consensus::{run_consensus, summarize_cell};
use peerflip_core::flip::run_trial;
use peerflip_core::{
    metrics, seed, Agent, Archetype, ConsensusOutcome, ConsensusSettings, FlipRecord, Graph,
    LogisticAgent, MajorityRule, ReplayAgent, Scenario, Trial,
};
use peerflip_core::agents::ReplayFixture;
use peerflip_core::analysis::curves_from_records;

use crate::catalog_io::LoadedCatalog;
use crate::config::{AgentKind, Config, Provider};
use crate::error::{LabError, Result};
use crate::fixture::{fixture_curves, read_fixture};
use crate::gateway::pacing::{Clock, SystemClock};
use crate::gateway::providers::{Credential, Gemini, OpenAi, Simulated, WithLatency};
use crate::gateway::{Gateway, GatewaySettings, LlmAgent, Transport, TranscriptCache};
use crate::graph_io::{generate_archetype, write_graph, NetworkStore};
use crate::manifest::ExperimentManifest;
use crate::records::{read_records, Provenance, RecordWriter};
use crate::tables::{self, AnalysisReport};

pub const RECORDS: &str = "records.csv";
pub const ANALYSIS_DIR: &str = "analysis";

/// The configured decision agent.
pub enum BuiltAgent {
    Majority(MajorityRule),
    Logistic(LogisticAgent),
    Replay(ReplayAgent),
    Llm(LlmAgent<Box<dyn Transport>>),
}

impl BuiltAgent {
    /// Build from config. Live providers read their credential from the
    /// environment variable named in the config.
    pub fn from_config(config: &Config) -> Result<BuiltAgent> {
        let transport: Box<dyn Transport> = match config.llm.provider {
            _ if config.agent.kind != AgentKind::Llm => return Self::local(config),
            Provider::Simulated => {
                let s = &config.llm.simulated;
                let sim = Simulated {
                    theta: s.theta,
                    scale: s.scale,
                    invalid_rate: s.invalid_rate,
                };
                Box::new(WithLatency::new(sim, Duration::from_millis(s.latency_ms)))
            }
            Provider::Openai => Box::new(OpenAi::new(
                config.llm.endpoint.as_deref(),
                Credential::from_env(config.llm.credential_var())?,
                Duration::from_secs(config.llm.request_timeout_secs),
            )),
            Provider::Gemini => Box::new(Gemini::new(
                config.llm.endpoint.as_deref(),
                Credential::from_env(config.llm.credential_var())?,
                Duration::from_secs(config.llm.request_timeout_secs),
            )),
        };
        Self::llm(config, transport, Arc::new(SystemClock))
    }

    /// An LLM agent over an arbitrary transport, cached under the
    /// configured transcript directory.
    pub fn llm(config: &Config, transport: Box<dyn Transport>, clock: Arc<dyn Clock>) -> Result<BuiltAgent> {
        let l = &config.llm;
        let settings = GatewaySettings {
            retry_budget: l.retry_budget,
            max_in_flight: l.max_in_flight,
            requests_per_minute: l.requests_per_minute,
            ..GatewaySettings::default()
        };
        let gateway = Gateway::new(transport, l.model.clone(), settings, clock).with_temperature(l.temperature);
        let cache = TranscriptCache::open(config.cache_dir())?;
        Ok(BuiltAgent::Llm(LlmAgent::new(gateway, Some(cache))))
    }

    fn local(config: &Config) -> Result<BuiltAgent> {
        let a = &config.agent;
        Ok(match a.kind {
            AgentKind::Majority => BuiltAgent::Majority(MajorityRule),
            AgentKind::Logistic => BuiltAgent::Logistic(LogisticAgent::new(a.theta, a.scale)?),
            AgentKind::Replay => {
                let path = a
                    .fixture
                    .as_deref()
                    .ok_or_else(|| LabError::config("agent.fixture", "required for the replay agent"))?;
                BuiltAgent::Replay(ReplayAgent {
                    fixture: read_fixture(path)?,
                })
            }
            AgentKind::Llm => unreachable!("handled by from_config"),
        })
    }

    pub fn agent(&self) -> &(dyn Agent + Sync) {
        match self {
            BuiltAgent::Majority(a) => a,
            BuiltAgent::Logistic(a) => a,
            BuiltAgent::Replay(a) => a,
            BuiltAgent::Llm(a) => a,
        }
    }

    fn workers(&self) -> usize {
        match self {
            BuiltAgent::Llm(a) => a.gateway().settings().max_in_flight,
            _ => std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

/// Cut a partially written last line left by an interrupted writer.
pub fn repair_tail(path: &Path) -> Result<()> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(LabError::io(path, e)),
    };
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let file = OpenOptions::new().write(true).open(path).map_err(|e| LabError::io(path, e))?;
    file.set_len(keep as u64).map_err(|e| LabError::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))
}

/// Run `jobs` on up to `workers` threads, returning results in job order.
/// Stops handing out work after the first error.
fn parallel_map<J: Sync, R: Send>(
    jobs: &[J],
    workers: usize,
    f: impl Fn(&J) -> Result<R> + Sync,
) -> Vec<Option<Result<R>>> {
    let next = AtomicUsize::new(0);
    let failed = std::sync::atomic::AtomicBool::new(false);
    let slots: Vec<Mutex<Option<Result<R>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, jobs.len().max(1)) {
            s.spawn(|| loop {
                if failed.load(AtomicOrdering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, AtomicOrdering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let r = f(job);
                if r.is_err() {
                    failed.store(true, AtomicOrdering::Relaxed);
                }
                *slots[i].lock().expect("slot lock") = Some(r);
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().expect("slot lock")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlipSummary {
    pub total: usize,
    pub resumed: usize,
    pub written: usize,
    pub failed_trials: usize,
}

type RecordKey = (peerflip_core::PromptSpec, peerflip_core::Answer, u32, u8, u32);

fn record_key(r: &FlipRecord) -> RecordKey {
    (r.spec, r.initial, r.peer_count, r.disagree_percent, r.repetition)
}

fn trial_key(t: &Trial) -> RecordKey {
    (t.spec, t.initial, t.peers.peer_count(), t.peers.disagree_percent(), t.repetition)
}

/// Run the flip grid into `<output_dir>/records.csv`, skipping trials
/// already recorded there. LLM transcripts are fetched in parallel ahead of
/// the writer, which appends rows in canonical trial order.
pub fn flip_grid(config: &Config, catalog: &LoadedCatalog, agent: &BuiltAgent) -> Result<FlipSummary> {
    let grid = config.flip_grid()?;
    let out = &config.run.output_dir;
    ensure_dir(out)?;
    ExperimentManifest::new("flip-grid", config, &catalog.checksum, &[RECORDS]).write_or_verify(out)?;
    let provenance = Provenance {
        catalog_checksum: catalog.checksum.clone(),
        model: agent.agent().name(),
        master_seed: grid.master_seed,
    };
    let path = out.join(RECORDS);
    repair_tail(&path)?;
    let mut done = HashSet::new();
    if path.exists() {
        let (existing, prov) = read_records(&path)?;
        if let Some(p) = prov.filter(|p| *p != provenance) {
            return Err(LabError::format(
                &path,
                format!("records were produced by {} (seed {}), not this configuration", p.model, p.master_seed),
            ));
        }
        for r in &existing {
            if !done.insert(record_key(r)) {
                return Err(LabError::format(&path, "duplicate trial row"));
            }
        }
    }
    let pending: Vec<Trial> = grid.trials().filter(|t| !done.contains(&trial_key(t))).collect();
    let mut writer = RecordWriter::append(&path, provenance)?;
    let mut summary = FlipSummary {
        total: grid.trial_count(),
        resumed: done.len(),
        written: 0,
        failed_trials: 0,
    };
    let mut emit = |record: FlipRecord| -> Result<()> {
        writer.write(&record)?;
        writer.flush()?;
        summary.written += 1;
        summary.failed_trials += usize::from(record.failed);
        Ok(())
    };
    let question = |t: &Trial| catalog.catalog.lookup(t.spec);
    match agent {
        BuiltAgent::Llm(llm) => {
            let chunk = agent.workers() * 8;
            for batch in pending.chunks(chunk) {
                let fetched = parallel_map(batch, agent.workers(), |t| {
                    llm.transcript(&t.context(question(t))).map_err(LabError::from)
                });
                for (t, f) in batch.iter().zip(fetched) {
                    match f {
                        Some(Ok(_)) => emit(run_trial(t, &catalog.catalog, agent.agent())?)?,
                        Some(Err(e)) => return Err(e),
                        None => break,
                    }
                }
            }
        }
        _ => {
            for t in &pending {
                emit(run_trial(t, &catalog.catalog, agent.agent())?)?;
            }
        }
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusSummary {
    pub runs: usize,
    pub resumed: usize,
    pub summary_path: PathBuf,
}

/// Seed of one consensus run.
pub fn consensus_seed(master: u64, topology: &str, scenario: Scenario, run: usize) -> u64 {
    seed::derive(master, &[seed::label_coord(topology), scenario as u64, run as u64])
}

/// Every configured topology × scenario × run over the cached networks.
/// Outcomes are appended as runs complete; the summary is rebuilt from the
/// whole outcome file.
pub fn consensus(config: &Config, catalog: &LoadedCatalog, agent: &BuiltAgent) -> Result<ConsensusSummary> {
    let c = &config.consensus;
    let store = NetworkStore {
        dir: config.graph.network_dir.clone(),
        extension: config.graph.extension.clone(),
    };
    let topologies: Vec<(Archetype, Graph)> = config
        .consensus_topologies()?
        .into_iter()
        .map(|a| store.load(a, config.graph.seed).map(|g| (a, g)))
        .collect::<Result<_>>()?;
    let spec = config.consensus_spec()?;
    let mut settings = ConsensusSettings::new(catalog.catalog.lookup(spec), Some(spec));
    settings.ordering = config.consensus_ordering()?;
    settings.max_cycles = c.max_cycles;
    settings.minority_fraction = c.minority_fraction;

    let out = &config.run.output_dir;
    ensure_dir(out)?;
    ExperimentManifest::new(
        "consensus",
        config,
        &catalog.checksum,
        &[tables::CONSENSUS_OUTCOMES, tables::CONSENSUS_SUMMARY],
    )
    .write_or_verify(out)?;
    let path = out.join(tables::CONSENSUS_OUTCOMES);
    repair_tail(&path)?;
    let existing = if path.exists() && fs::metadata(&path).map_err(|e| LabError::io(&path, e))?.len() > 0 {
        tables::read_outcomes(&path)?
    } else {
        Vec::new()
    };
    let done: BTreeSet<(String, Scenario, u64)> = existing
        .iter()
        .map(|o| (o.topology.clone(), o.scenario, o.seed))
        .collect();

    let scenarios = config.consensus_scenarios()?;
    let mut jobs = Vec::new();
    for (a, g) in &topologies {
        for &s in &scenarios {
            for run in 0..c.runs {
                let seed = consensus_seed(config.run.master_seed, a.label(), s, run);
                if !done.contains(&(a.label().to_string(), s, seed)) {
                    jobs.push((a.label(), g, s, seed));
                }
            }
        }
    }

    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| LabError::io(&path, e))?;
    let fresh = file.metadata().map_err(|e| LabError::io(&path, e))?.len() == 0;
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    let csv_err = |e: csv::Error| LabError::format(&path, e);
    if fresh {
        writer.write_record(tables::OUTCOME_HEADER).map_err(csv_err)?;
    }
    let workers = agent.workers();
    for batch in jobs.chunks(workers * 4) {
        let results = parallel_map(batch, workers, |&(label, g, s, seed)| {
            run_consensus(g, label, agent.agent(), s, &settings, seed).map_err(LabError::from)
        });
        for r in results {
            match r {
                Some(Ok(o)) => {
                    writer.write_record(tables::outcome_row(&o)).map_err(csv_err)?;
                    writer.flush().map_err(|e| LabError::io(&path, e))?;
                }
                Some(Err(e)) => return Err(e),
                None => break,
            }
        }
    }
    drop(writer);

    let outcomes = tables::read_outcomes(&path)?;
    let summary_path = out.join(tables::CONSENSUS_SUMMARY);
    write_consensus_summary(&outcomes, &summary_path)?;
    Ok(ConsensusSummary {
        runs: outcomes.len(),
        resumed: existing.len(),
        summary_path,
    })
}

/// Per (topology, scenario) summary in first-appearance order.
pub fn write_consensus_summary(outcomes: &[ConsensusOutcome], path: &Path) -> Result<()> {
    let mut cells: Vec<(String, Scenario)> = Vec::new();
    for o in outcomes {
        let k = (o.topology.clone(), o.scenario);
        if !cells.contains(&k) {
            cells.push(k);
        }
    }
    let summary: Vec<_> = cells
        .iter()
        .map(|(t, s)| {
            let runs: Vec<ConsensusOutcome> = outcomes
                .iter()
                .filter(|o| &o.topology == t && o.scenario == *s)
                .cloned()
                .collect();
            summarize_cell(t, *s, &runs)
        })
        .collect();
    tables::write_table(path, &tables::summary_rows(&summary))
}

/// Build (or load) the archetypes and write their metrics table.
/// Returns each archetype with whether it was generated now.
pub fn gen_networks(config: &Config, archetypes: &[Archetype], force: bool) -> Result<Vec<(Archetype, bool)>> {
    let store = NetworkStore {
        dir: config.graph.network_dir.clone(),
        extension: config.graph.extension.clone(),
    };
    ensure_dir(&store.dir)?;
    let seed = config.graph.seed;
    let params = config.graph.params();
    let built = parallel_map(archetypes, archetypes.len(), |&a| {
        if force {
            let g = generate_archetype(a, seed, params)?;
            write_graph(&store.path(a, seed), &g)?;
            Ok((a, g, true))
        } else {
            store.ensure(a, seed, params).map(|(g, fresh)| (a, g, fresh))
        }
    });
    let mut rows = Vec::new();
    let mut report = Vec::new();
    for b in built {
        let (a, g, fresh) = b.expect("every job runs when none fails")?;
        let m = metrics(&g)?;
        rows.push((a, seed, g.node_count(), g.edge_count(), m));
        report.push((a, fresh));
    }
    tables::write_table(&store.dir.join(tables::NETWORK_METRICS), &tables::metrics_rows(&rows))?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub enum AnalysisInput {
    Records(PathBuf),
    Fixture(PathBuf),
}

/// Derive every analysis table from records or a replay fixture.
pub fn analyze(config: &Config, input: &AnalysisInput, out_dir: &Path) -> Result<AnalysisReport> {
    let method = config.threshold_method()?;
    ensure_dir(out_dir)?;
    let report = match input {
        AnalysisInput::Records(path) => {
            let (records, provenance) = read_records(path)?;
            let checksum = provenance.map(|p| p.catalog_checksum).unwrap_or_default();
            ExperimentManifest::new("analyze", config, &checksum, &tables::ANALYSIS_FILES).write_or_verify(out_dir)?;
            AnalysisReport::build(|g| Ok(curves_from_records(&records, g)), method)?
        }
        AnalysisInput::Fixture(path) => {
            let checksum = crate::fsutil::sha256_hex(&crate::fsutil::read_bytes(path)?);
            ExperimentManifest::new("analyze", config, &checksum, &tables::ANALYSIS_FILES).write_or_verify(out_dir)?;
            let fixture: ReplayFixture = read_fixture(path)?;
            AnalysisReport::build(|g| fixture_curves(&fixture, g), method)?
        }
    };
    report.write(out_dir)?;
    Ok(report)
}

/// Rebuild every table derivable from the files already in the output
/// directory. Returns the paths written.
pub fn report(config: &Config, catalog: &LoadedCatalog) -> Result<Vec<PathBuf>> {
    let out = &config.run.output_dir;
    ensure_dir(out)?;
    ExperimentManifest::new(
        "report",
        config,
        &catalog.checksum,
        &[ANALYSIS_DIR, tables::CONSENSUS_SUMMARY, tables::NETWORK_METRICS],
    )
    .write_or_verify(out)?;
    let mut written = Vec::new();
    let records = out.join(RECORDS);
    if records.exists() {
        let dir = out.join(ANALYSIS_DIR);
        analyze(config, &AnalysisInput::Records(records), &dir)?;
        written.extend(tables::ANALYSIS_FILES.iter().map(|f| dir.join(f)));
    }
    let outcomes = out.join(tables::CONSENSUS_OUTCOMES);
    if outcomes.exists() {
        let path = out.join(tables::CONSENSUS_SUMMARY);
        write_consensus_summary(&tables::read_outcomes(&outcomes)?, &path)?;
        written.push(path);
    }
    let store = NetworkStore {
        dir: config.graph.network_dir.clone(),
        extension: config.graph.extension.clone(),
    };
    let seed = config.graph.seed;
    let mut rows = Vec::new();
    for a in config.consensus_topologies()? {
        if store.path(a, seed).exists() {
            let g = store.load(a, seed)?;
            rows.push((a, seed, g.node_count(), g.edge_count(), metrics(&g)?));
        }
    }
    if !rows.is_empty() {
        let path = out.join(tables::NETWORK_METRICS);
        tables::write_table(&path, &tables::metrics_rows(&rows))?;
        written.push(path);
    }
    Ok(written)
}

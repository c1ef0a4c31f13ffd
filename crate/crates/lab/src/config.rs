//! Declarative run configuration: one TOML file with a section per stage,
//! overridable from the command line with `--set section.key=value`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use peerflip_core::analysis::ThresholdMethod;
use peerflip_core::{Answer, Archetype, Frame, GridConfig, Layer, OrderingPolicy, PromptSpec, Scenario, Topic};

use crate::error::{LabError, Result};
use crate::graph_io::ArchetypeParams;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub run: RunSection,
    pub graph: GraphSection,
    pub catalog: CatalogSection,
    pub agent: AgentSection,
    pub llm: LlmSection,
    pub flip: FlipSection,
    pub consensus: ConsensusSection,
    pub analysis: AnalysisSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub master_seed: u64,
    pub output_dir: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            master_seed: 0,
            output_dir: "runs/default".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphSection {
    pub nodes: usize,
    pub degree: usize,
    pub budget: u64,
    pub seed: u64,
    pub network_dir: PathBuf,
    pub extension: String,
}

impl Default for GraphSection {
    fn default() -> Self {
        GraphSection {
            nodes: 100,
            degree: 19,
            budget: 200_000,
            seed: 0,
            network_dir: "networks".into(),
            extension: "graph.json".into(),
        }
    }
}

impl GraphSection {
    pub fn params(&self) -> ArchetypeParams {
        ArchetypeParams {
            nodes: self.nodes,
            degree: self.degree,
            budget: self.budget,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CatalogSection {
    /// Built-in catalog when absent.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Majority,
    Logistic,
    Replay,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentSection {
    pub kind: AgentKind,
    pub theta: f64,
    pub scale: f64,
    pub fixture: Option<PathBuf>,
}

impl Default for AgentSection {
    fn default() -> Self {
        AgentSection {
            kind: AgentKind::Majority,
            theta: 70.0,
            scale: 5.0,
            fixture: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provider {
    Openai,
    Gemini,
    Simulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LlmSection {
    pub provider: Provider,
    pub model: String,
    pub endpoint: Option<String>,
    /// Name of the environment variable holding the key; never the key.
    pub credential_env: Option<String>,
    pub request_timeout_secs: u64,
    pub max_in_flight: usize,
    pub requests_per_minute: u32,
    pub retry_budget: u32,
    pub temperature: Option<f64>,
    /// Defaults to `<output_dir>/transcripts`.
    pub cache_dir: Option<PathBuf>,
    pub simulated: SimulatedSection,
}

impl Default for LlmSection {
    fn default() -> Self {
        LlmSection {
            provider: Provider::Gemini,
            model: "gemini-1.5-flash".into(),
            endpoint: None,
            credential_env: None,
            request_timeout_secs: 60,
            max_in_flight: 4,
            requests_per_minute: 60,
            retry_budget: 3,
            temperature: None,
            cache_dir: None,
            simulated: SimulatedSection::default(),
        }
    }
}

impl LlmSection {
    pub fn credential_var(&self) -> &str {
        self.credential_env.as_deref().unwrap_or(match self.provider {
            Provider::Openai => "OPENAI_API_KEY",
            Provider::Gemini => "GEMINI_API_KEY",
            Provider::Simulated => "",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulatedSection {
    pub theta: f64,
    pub scale: f64,
    pub invalid_rate: f64,
    /// Artificial delay per request.
    pub latency_ms: u64,
}

impl Default for SimulatedSection {
    fn default() -> Self {
        SimulatedSection {
            theta: 70.0,
            scale: 5.0,
            invalid_rate: 0.0,
            latency_ms: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlipSection {
    /// Empty means all.
    pub topics: Vec<String>,
    pub layers: Vec<String>,
    pub frames: Vec<String>,
    pub peer_count: u32,
    pub agreement_ratios: Vec<u8>,
    pub repetitions: u32,
    pub initial_stances: Vec<String>,
    pub ordering: String,
}

impl Default for FlipSection {
    fn default() -> Self {
        FlipSection {
            topics: Vec::new(),
            layers: Vec::new(),
            frames: Vec::new(),
            peer_count: 10,
            agreement_ratios: (0..=100).step_by(10).collect(),
            repetitions: 30,
            initial_stances: vec!["Yes".into(), "No".into()],
            ordering: "alternate".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConsensusSection {
    /// Empty means all ten.
    pub topologies: Vec<String>,
    pub scenarios: Vec<String>,
    pub runs: usize,
    pub max_cycles: u32,
    pub minority_fraction: f64,
    pub topic: String,
    pub layer: String,
    pub frame: String,
    pub ordering: String,
}

impl Default for ConsensusSection {
    fn default() -> Self {
        ConsensusSection {
            topologies: Vec::new(),
            scenarios: vec!["minority_no".into(), "minority_yes".into()],
            runs: 10,
            max_cycles: 25,
            minority_fraction: 0.2,
            topic: "green_energy".into(),
            layer: "attitudes".into(),
            frame: "economic".into(),
            ordering: "random".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    /// `linear` or `logistic`.
    pub method: String,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            method: "linear".into(),
        }
    }
}

fn parse_each<T>(key: &str, values: &[String], all: &[T]) -> Result<Vec<T>>
where
    T: std::str::FromStr + Copy,
    T::Err: std::fmt::Display,
{
    if values.is_empty() {
        return Ok(all.to_vec());
    }
    values
        .iter()
        .map(|v| v.parse().map_err(|e| LabError::config(key, e)))
        .collect()
}

impl Config {
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Config> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| LabError::config("<file>", e.message()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: Config = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| LabError::config(describe_key(&e), e.message()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Config> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| LabError::io(p, e))?,
            None => String::new(),
        };
        Config::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.flip_grid()?.validate().map_err(|e| LabError::config("flip", e))?;
        self.consensus_topologies()?;
        self.consensus_scenarios()?;
        self.consensus_spec()?;
        self.threshold_method()?;
        self.consensus_ordering()?;
        let c = &self.consensus;
        if !(c.minority_fraction > 0.0 && c.minority_fraction < 0.5) {
            return Err(LabError::config("consensus.minority_fraction", "must lie strictly between 0 and 0.5"));
        }
        if c.runs == 0 {
            return Err(LabError::config("consensus.runs", "must be positive"));
        }
        if self.agent.scale <= 0.0 || !self.agent.scale.is_finite() {
            return Err(LabError::config("agent.scale", "must be positive"));
        }
        if self.agent.kind == AgentKind::Replay && self.agent.fixture.is_none() {
            return Err(LabError::config("agent.fixture", "required for the replay agent"));
        }
        let l = &self.llm;
        if l.max_in_flight == 0 {
            return Err(LabError::config("llm.max_in_flight", "must be at least 1"));
        }
        if l.requests_per_minute == 0 {
            return Err(LabError::config("llm.requests_per_minute", "must be at least 1"));
        }
        if l.retry_budget == 0 {
            return Err(LabError::config("llm.retry_budget", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&l.simulated.invalid_rate) {
            return Err(LabError::config("llm.simulated.invalid_rate", "must lie in [0, 1]"));
        }
        if (self.graph.nodes * self.graph.degree) % 2 == 1 || self.graph.degree >= self.graph.nodes {
            return Err(LabError::config("graph.degree", "no regular graph with these nodes and degree"));
        }
        if self.graph.extension.is_empty() {
            return Err(LabError::config("graph.extension", "must not be empty"));
        }
        Ok(())
    }

    pub fn flip_grid(&self) -> Result<GridConfig> {
        let f = &self.flip;
        let topics = parse_each::<Topic>("flip.topics", &f.topics, Topic::ALL)?;
        let layers = parse_each::<Layer>("flip.layers", &f.layers, Layer::ALL)?;
        let frames = parse_each::<Frame>("flip.frames", &f.frames, Frame::ALL)?;
        let specs = PromptSpec::all()
            .filter(|s| topics.contains(&s.topic) && layers.contains(&s.layer) && frames.contains(&s.frame))
            .collect();
        let initial_stances = parse_each::<Answer>("flip.initial_stances", &f.initial_stances, &Answer::BOTH)?;
        let ordering: OrderingPolicy = f.ordering.parse().map_err(|e| LabError::config("flip.ordering", e))?;
        let grid = GridConfig {
            specs,
            peer_count: f.peer_count,
            agreement_ratios: f.agreement_ratios.clone(),
            repetitions: f.repetitions,
            initial_stances,
            ordering,
            master_seed: self.run.master_seed,
        };
        grid.validate().map_err(|e| LabError::config("flip", e))?;
        Ok(grid)
    }

    pub fn consensus_topologies(&self) -> Result<Vec<Archetype>> {
        parse_each::<Archetype>("consensus.topologies", &self.consensus.topologies, &Archetype::TEN)
    }

    pub fn consensus_scenarios(&self) -> Result<Vec<Scenario>> {
        parse_each::<Scenario>("consensus.scenarios", &self.consensus.scenarios, &Scenario::BOTH)
    }

    pub fn consensus_spec(&self) -> Result<PromptSpec> {
        let c = &self.consensus;
        Ok(PromptSpec::new(
            c.topic.parse().map_err(|e| LabError::config("consensus.topic", e))?,
            c.layer.parse().map_err(|e| LabError::config("consensus.layer", e))?,
            c.frame.parse().map_err(|e| LabError::config("consensus.frame", e))?,
        ))
    }

    pub fn consensus_ordering(&self) -> Result<OrderingPolicy> {
        self.consensus
            .ordering
            .parse()
            .map_err(|e| LabError::config("consensus.ordering", e))
    }

    pub fn threshold_method(&self) -> Result<ThresholdMethod> {
        match self.analysis.method.as_str() {
            "linear" => Ok(ThresholdMethod::Linear),
            "logistic" => Ok(ThresholdMethod::LogisticFit),
            other => Err(LabError::config(
                "analysis.method",
                format!("expected `linear` or `logistic`, got `{other}`"),
            )),
        }
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.llm
            .cache_dir
            .clone()
            .unwrap_or_else(|| self.run.output_dir.join("transcripts"))
    }
}

fn describe_key(e: &toml::de::Error) -> String {
    let msg = e.message();
    msg.split('`')
        .nth(1)
        .filter(|_| msg.starts_with("unknown field"))
        .map_or_else(|| "<config>".to_string(), str::to_string)
}

/// Apply `a.b.c=value`. The value is read as TOML when it parses as a
/// scalar or array, else as a bare string.
fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| LabError::config(assignment, "override must look like section.key=value"))?;
    let path = path.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    let (last, parents) = keys.split_last().expect("split yields at least one item");
    let mut cursor = table;
    for k in parents {
        let entry = cursor
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry
            .as_table_mut()
            .ok_or_else(|| LabError::config(path, format!("`{k}` is not a section")))?;
    }
    cursor.insert(last.to_string(), value);
    Ok(())
}

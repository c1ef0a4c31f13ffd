//! Graph documents and the on-disk archetype store.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use peerflip_core::{
    complete_graph, optimize_topology, ring_lattice, AnnealConfig, Archetype, Graph, GraphError,
    TopologyObjective,
};

use crate::error::{LabError, Result};
use crate::fsutil::write_atomic;

/// Serialized form of a graph. Field order is the on-disk key order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub node_count: usize,
    pub archetype_label: Option<String>,
    pub generation_seed: Option<u64>,
    pub edges: Vec<[usize; 2]>,
}

impl GraphFile {
    pub fn from_graph(g: &Graph) -> GraphFile {
        GraphFile {
            node_count: g.node_count(),
            archetype_label: g.archetype().map(|a| a.label().to_string()),
            generation_seed: g.generation_seed(),
            edges: g.edges().map(|(u, v)| [u, v]).collect(),
        }
    }

    pub fn to_graph(&self) -> Result<Graph, GraphError> {
        let edges: Vec<(usize, usize)> = self.edges.iter().map(|e| (e[0], e[1])).collect();
        let mut g = Graph::from_edges(self.node_count, &edges)?;
        if let Some(label) = &self.archetype_label {
            g = g.with_archetype(label.parse()?);
        }
        if let Some(seed) = self.generation_seed {
            g = g.with_seed(seed);
        }
        Ok(g)
    }
}

pub fn write_graph(path: &Path, g: &Graph) -> Result<()> {
    let mut text = serde_json::to_string_pretty(&GraphFile::from_graph(g))
        .map_err(|e| LabError::format(path, e))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_graph(path: &Path) -> Result<Graph> {
    let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    let file: GraphFile = serde_json::from_str(&text).map_err(|e| LabError::format(path, e))?;
    file.to_graph().map_err(|e| LabError::format(path, e))
}

/// Sizes shared by all archetypes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArchetypeParams {
    pub nodes: usize,
    pub degree: usize,
    pub budget: u64,
}

impl Default for ArchetypeParams {
    fn default() -> Self {
        ArchetypeParams {
            nodes: 100,
            degree: 19,
            budget: 200_000,
        }
    }
}

/// Build one of the ten archetypes. Only the optimized ones use the seed.
pub fn generate_archetype(archetype: Archetype, seed: u64, params: ArchetypeParams) -> Result<Graph> {
    let g = match archetype {
        Archetype::FullyConnected => complete_graph(params.nodes)?,
        Archetype::Lattice => ring_lattice(params.nodes, params.degree)?,
        Archetype::Custom => return Err(GraphError::UnknownArchetype("custom".into()).into()),
        other => {
            let objective = TopologyObjective::from_archetype(other)
                .expect("every optimized archetype has an objective");
            let cfg = AnnealConfig {
                nodes: params.nodes,
                degree: params.degree,
                seed,
                budget: params.budget,
            };
            optimize_topology(objective, &cfg)?
        }
    };
    Ok(g.with_archetype(archetype).with_seed(seed))
}

/// A directory of `<archetype>_<seed>.<extension>` files.
#[derive(Debug, Clone)]
pub struct NetworkStore {
    pub dir: PathBuf,
    pub extension: String,
}

impl NetworkStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        NetworkStore {
            dir: dir.into(),
            extension: "graph.json".into(),
        }
    }

    pub fn path(&self, archetype: Archetype, seed: u64) -> PathBuf {
        self.dir
            .join(format!("{}_{}.{}", archetype.label(), seed, self.extension))
    }

    pub fn load(&self, archetype: Archetype, seed: u64) -> Result<Graph> {
        let path = self.path(archetype, seed);
        if !path.exists() {
            return Err(LabError::MissingNetwork(path));
        }
        let g = read_graph(&path)?;
        if g.archetype() != Some(archetype) {
            return Err(LabError::format(
                &path,
                format!("expected archetype {archetype}, found {:?}", g.archetype()),
            ));
        }
        g.require_connected().map_err(|e| LabError::format(&path, e))?;
        Ok(g)
    }

    /// Load the cached archetype, generating and saving it when absent.
    /// Returns the graph and whether it was generated.
    pub fn ensure(&self, archetype: Archetype, seed: u64, params: ArchetypeParams) -> Result<(Graph, bool)> {
        match self.load(archetype, seed) {
            Ok(g) => Ok((g, false)),
            Err(LabError::MissingNetwork(path)) => {
                let g = generate_archetype(archetype, seed, params)?;
                fs::create_dir_all(&self.dir).map_err(|e| LabError::io(&self.dir, e))?;
                write_graph(&path, &g)?;
                Ok((g, true))
            }
            Err(e) => Err(e),
        }
    }
}

//! File formats: structure files, graph files, plain edge lists and
//! inference dumps. All JSON files are written with a trailing newline and
//! deterministic field order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bp::BpReport;
use crate::em::EmRecord;
use crate::error::{Error, Result};
use crate::generator::{Graph, PlantedPartition, RNG_NAME};
use crate::model::{ClusterDistribution, IndicatorMatrix, ModelSpec, Structure};

/// On-disk structure: `{"q", "W", "gamma_planted"?, "gamma_prior"?}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructureFile {
    pub q: usize,
    #[serde(rename = "W")]
    pub w: Vec<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_planted: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_prior: Option<Vec<f64>>,
}

impl StructureFile {
    pub fn into_structure(self) -> Result<Structure> {
        let w = IndicatorMatrix::new(self.w)?;
        if w.q() != self.q {
            return Err(Error::InvalidStructure(format!(
                "q = {} but W is {}x{}",
                self.q,
                w.q(),
                w.q()
            )));
        }
        let dist = |g: Option<Vec<f64>>| match g {
            Some(v) => ClusterDistribution::new(v),
            None => Ok(ClusterDistribution::uniform(self.q)),
        };
        Structure::new(w, dist(self.gamma_planted)?, dist(self.gamma_prior)?)
    }

    pub fn from_structure(s: &Structure) -> Self {
        StructureFile {
            q: s.q,
            w: s.w.rows(),
            gamma_planted: Some(s.gamma_planted.as_slice().to_vec()),
            gamma_prior: Some(s.gamma_prior.as_slice().to_vec()),
        }
    }
}

pub fn parse_structure_json(text: &str) -> Result<Structure> {
    serde_json::from_str::<StructureFile>(text)?.into_structure()
}

/// A preset name (see [`Structure::preset`]) or a path to a structure file.
pub fn load_structure(name_or_path: &str) -> Result<Structure> {
    let path = Path::new(name_or_path);
    if path.is_file() {
        return parse_structure_json(&std::fs::read_to_string(path)?);
    }
    Structure::preset(name_or_path)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpecSection {
    #[serde(flatten)]
    pub structure: StructureFile,
    pub n: usize,
    pub c: f64,
    pub epsilon: f64,
}

/// Generated graph with everything needed to regenerate or score it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphFile {
    pub n: usize,
    pub seed: u64,
    #[serde(default)]
    pub rng: String,
    pub spec: SpecSection,
    pub edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planted: Option<Vec<usize>>,
}

impl GraphFile {
    pub fn new(spec: &ModelSpec, seed: u64, graph: &Graph, planted: &PlantedPartition) -> Self {
        GraphFile {
            n: graph.n(),
            seed,
            rng: RNG_NAME.to_string(),
            spec: SpecSection {
                structure: StructureFile::from_structure(&spec.structure),
                n: spec.n,
                c: spec.c,
                epsilon: spec.affinity.epsilon,
            },
            edges: graph.edges().iter().map(|&(i, j)| [i, j]).collect(),
            planted: Some(planted.labels.clone()),
        }
    }

    pub fn graph(&self) -> Result<Graph> {
        Graph::new(self.n, self.edges.iter().map(|e| (e[0], e[1])))
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        ModelSpec::new(
            self.spec.structure.clone().into_structure()?,
            self.spec.n,
            self.spec.c,
            self.spec.epsilon,
        )
    }

    pub fn planted_partition(&self) -> Result<Option<PlantedPartition>> {
        self.planted
            .as_ref()
            .map(|labels| PlantedPartition::new(self.spec.structure.q, labels.clone()))
            .transpose()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)? + "\n")
    }
}

/// Whitespace-separated `i j` pairs, one per line, 0-indexed. Blank lines
/// and `#` comments are skipped. Without `n`, the vertex count is one more
/// than the largest index.
pub fn parse_edge_list(text: &str, n: Option<usize>) -> Result<Graph> {
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let mut next = || -> Result<usize> {
            fields
                .next()
                .ok_or_else(|| Error::Parse(format!("line {}: expected two vertex indices", lineno + 1)))?
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
        };
        let (i, j) = (next()?, next()?);
        if fields.next().is_some() {
            return Err(Error::Parse(format!("line {}: more than two fields", lineno + 1)));
        }
        pairs.push((i, j));
    }
    let n = n.unwrap_or_else(|| pairs.iter().map(|&(i, j)| i.max(j) + 1).max().unwrap_or(0));
    Graph::new(n, pairs)
}

/// Graph input for inference: a graph file when the text parses as JSON,
/// otherwise an edge list.
pub enum GraphInput {
    File(Box<GraphFile>),
    EdgeList(Graph),
}

pub fn read_graph_input(path: &Path, n: Option<usize>) -> Result<GraphInput> {
    let text = std::fs::read_to_string(path)?;
    if text.trim_start().starts_with('{') {
        Ok(GraphInput::File(Box::new(serde_json::from_str(&text)?)))
    } else {
        Ok(GraphInput::EdgeList(parse_edge_list(&text, n)?))
    }
}

/// Final parameters after EM.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedParams {
    pub gamma: Vec<f64>,
    pub omega_in: f64,
    pub omega_out: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct InferenceReport {
    pub converged: bool,
    pub em_iters: usize,
    pub bp: BpReport,
    pub params: FittedParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overlap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chance: Option<f64>,
}

/// Marginals, hard assignments, run summary and EM history.
#[derive(Debug, Clone, Serialize)]
pub struct MarginalsDump {
    pub marginals: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub report: InferenceReport,
    pub history: Vec<EmRecord>,
}

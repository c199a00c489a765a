//! Graph files and seeded random digraph generation.

use std::fs;
use std::path::Path;

use nlcons_core::graph::{analyze_structure, build_graph, GraphError, WeightedDigraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::format::{DocumentFormat, FormatError};

/// Rejection-sampling cap.
pub const MAX_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Requirement {
    #[default]
    None,
    SpanningTree,
    StronglyConnected,
}

impl Requirement {
    pub fn holds(self, g: &WeightedDigraph) -> bool {
        let s = analyze_structure(g);
        match self {
            Requirement::None => true,
            Requirement::SpanningTree => s.has_spanning_tree,
            Requirement::StronglyConnected => s.strongly_connected,
        }
    }
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("node count must be at least 1")]
    NoNodes,
    #[error("edge probability must lie in (0, 1], got {0}")]
    Probability(f64),
    #[error("weight range [{low}, {high}] must be positive with low <= high")]
    Weights { low: f64, high: f64 },
    #[error("no graph satisfying {requirement:?} after {attempts} attempts")]
    RequirementUnsatisfiable { requirement: Requirement, attempts: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomGraphParams {
    pub n: usize,
    pub p: f64,
    #[serde(default = "one")]
    pub weight_low: f64,
    #[serde(default = "one")]
    pub weight_high: f64,
    pub seed: u64,
    #[serde(default)]
    pub require: Requirement,
}

fn one() -> f64 {
    1.0
}

impl RandomGraphParams {
    pub fn validate(&self) -> Result<(), GenError> {
        if self.n == 0 {
            return Err(GenError::NoNodes);
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(GenError::Probability(self.p));
        }
        if !(self.weight_low > 0.0 && self.weight_low <= self.weight_high && self.weight_high.is_finite()) {
            return Err(GenError::Weights {
                low: self.weight_low,
                high: self.weight_high,
            });
        }
        Ok(())
    }
}

/// Each ordered pair becomes an edge with probability `p` and a uniform
/// weight; resampled until `require` holds.
pub fn generate_random_graph(params: &RandomGraphParams) -> Result<WeightedDigraph, GenError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = params.n;
    for _ in 0..MAX_ATTEMPTS {
        let mut edges = Vec::new();
        for s in 0..n {
            for t in 0..n {
                if s == t || !rng.gen_bool(params.p) {
                    continue;
                }
                let w = if params.weight_low == params.weight_high {
                    params.weight_low
                } else {
                    rng.gen_range(params.weight_low..params.weight_high)
                };
                edges.push((s, t, w));
            }
        }
        let g = build_graph(n, &edges)?;
        if params.require.holds(&g) {
            return Ok(g);
        }
    }
    Err(GenError::RequirementUnsatisfiable {
        requirement: params.require,
        attempts: MAX_ATTEMPTS,
    })
}

/// On-disk graph: `n` and `[source, target, weight]` triples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub n: usize,
    #[serde(default)]
    pub edges: Vec<(usize, usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl GraphFile {
    pub fn to_graph(&self) -> Result<WeightedDigraph, GraphError> {
        let g = build_graph(self.n, &self.edges)?;
        match &self.labels {
            Some(l) => g.with_labels(l.clone()),
            None => Ok(g),
        }
    }
}

impl From<&WeightedDigraph> for GraphFile {
    fn from(g: &WeightedDigraph) -> Self {
        Self {
            n: g.node_count(),
            edges: g.edges().iter().map(|e| (e.source, e.target, e.weight)).collect(),
            labels: g.labels().map(<[String]>::to_vec),
        }
    }
}

pub fn read_graph_file(path: &Path) -> Result<GraphFile, FormatError> {
    let format = DocumentFormat::from_path(path)?;
    let text = fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    format.parse(&text, path)
}

pub fn write_graph_file(path: &Path, graph: &GraphFile) -> Result<(), FormatError> {
    let text = DocumentFormat::from_path(path)?.render(graph)?;
    fs::write(path, text).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}

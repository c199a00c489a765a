//! Scenario documents: graph, nonlinearities, initial conditions,
//! integrator settings and output paths.

use std::fs;
use std::path::{Path, PathBuf};

use nlcons_core::graph::{build_graph, GraphError, WeightedDigraph};
use nlcons_core::inclusion::{ConsensusSystem, InclusionError};
use nlcons_core::integrator::{default_dt, IntegratorConfig, IntegratorError, DEFAULT_CHATTER_WINDOW, DEFAULT_EVENT_TOLERANCE};
use nlcons_core::nonlinearity::Nonlinearity;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::format::{DocumentFormat, FormatError};
use crate::graphgen::{generate_random_graph, read_graph_file, GenError, RandomGraphParams};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("invalid graph: {0}")]
    Graph(#[from] GraphError),
    #[error("random graph: {0}")]
    Generation(#[from] GenError),
    #[error(transparent)]
    System(#[from] InclusionError),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub graph: GraphSpec,
    pub nonlinearities: NonlinearitySpec,
    pub initial: InitialSpec,
    pub integrator: IntegratorSpec,
    #[serde(default)]
    pub outputs: OutputSpec,
}

/// Exactly one of: inline `n` + `edges`, a graph `file`, or `random`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<(usize, usize, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    /// Relative paths resolve against the scenario file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random: Option<RandomGraphParams>,
}

/// Exactly one of `shared` or `per_node`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearitySpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shared: Option<Nonlinearity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_node: Option<Vec<Nonlinearity>>,
}

/// One state vector or a list of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExplicitStates {
    One(Vec<f64>),
    Many(Vec<Vec<f64>>),
}

impl ExplicitStates {
    pub fn into_vec(self) -> Vec<Vec<f64>> {
        match self {
            ExplicitStates::One(v) => vec![v],
            ExplicitStates::Many(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomInitial {
    pub count: usize,
    pub low: f64,
    pub high: f64,
    pub seed: u64,
}

/// Exactly one of `explicit` or `random`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explicit: Option<ExplicitStates>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random: Option<RandomInitial>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    /// Defaults to a hundredth of the smallest quantizer step, else 1e-3.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub t_end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chatter_window: Option<usize>,
}

/// Paths relative to the output directory. With several initial
/// conditions each per-trajectory file gets an `_<index>` suffix.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory_csv: Option<PathBuf>,
    /// Defaults to `<trajectory stem>_events.csv` when a trajectory file is
    /// requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events_csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lyapunov_csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
}

/// Command-line values that replace scenario fields.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    /// Replaces the seed of random initial states and of a random graph.
    pub seed: Option<u64>,
}

/// A validated scenario ready to simulate.
#[derive(Debug, Clone)]
pub struct ResolvedScenario {
    pub system: ConsensusSystem,
    pub initials: Vec<Vec<f64>>,
    pub config: IntegratorConfig,
    pub outputs: OutputSpec,
}

impl Scenario {
    pub fn from_path(path: &Path) -> Result<Self, ScenarioError> {
        let format = DocumentFormat::from_path(path)?;
        let text = fs::read_to_string(path).map_err(|source| FormatError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(format.parse(&text, path)?)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(dt) = o.dt {
            self.integrator.dt = Some(dt);
        }
        if let Some(t) = o.t_end {
            self.integrator.t_end = t;
        }
        if let Some(seed) = o.seed {
            if let Some(r) = &mut self.initial.random {
                r.seed = seed;
            }
            if let Some(r) = &mut self.graph.random {
                r.seed = seed;
            }
        }
    }

    /// Validates and builds the system, initial states and configuration.
    /// `base_dir` anchors a relative graph file path.
    pub fn resolve(&self, base_dir: &Path) -> Result<ResolvedScenario, ScenarioError> {
        let graph = self.graph.build(base_dir)?;
        let n = graph.node_count();
        let descriptors = self.nonlinearities.for_nodes(n)?;
        let system = ConsensusSystem::from_descriptors(graph, descriptors)?;
        let initials = self.initial.states(n)?;
        let i = &self.integrator;
        let config = IntegratorConfig {
            dt: i.dt.unwrap_or_else(|| default_dt(&system)),
            t_end: i.t_end,
            event_tolerance: i.event_tolerance.unwrap_or(DEFAULT_EVENT_TOLERANCE),
            chatter_window: i.chatter_window.unwrap_or(DEFAULT_CHATTER_WINDOW),
            snap_band: None,
        };
        config.validate()?;
        Ok(ResolvedScenario {
            system,
            initials,
            config,
            outputs: self.outputs.clone(),
        })
    }
}

impl GraphSpec {
    pub fn build(&self, base_dir: &Path) -> Result<WeightedDigraph, ScenarioError> {
        let inline = self.n.is_some() || self.edges.is_some();
        let sources = [inline, self.file.is_some(), self.random.is_some()];
        if sources.iter().filter(|&&s| s).count() != 1 {
            return Err(invalid("graph needs exactly one of inline `n`/`edges`, `file` or `random`"));
        }
        if self.labels.is_some() && !inline {
            return Err(invalid("graph `labels` are only accepted with an inline graph"));
        }
        if let Some(path) = &self.file {
            let full = base_dir.join(path);
            return Ok(read_graph_file(&full)?.to_graph()?);
        }
        if let Some(r) = &self.random {
            return Ok(generate_random_graph(r)?);
        }
        let n = self.n.ok_or_else(|| invalid("inline graph needs `n`"))?;
        let edges = self.edges.clone().unwrap_or_default();
        let g = build_graph(n, &edges)?;
        Ok(match &self.labels {
            Some(l) => g.with_labels(l.clone())?,
            None => g,
        })
    }
}

impl NonlinearitySpec {
    pub fn for_nodes(&self, n: usize) -> Result<Vec<Nonlinearity>, ScenarioError> {
        match (&self.shared, &self.per_node) {
            (Some(f), None) => Ok(vec![f.clone(); n]),
            (None, Some(list)) if list.len() == n => Ok(list.clone()),
            (None, Some(list)) => Err(invalid(format!(
                "per_node lists {} nonlinearities for {} nodes",
                list.len(),
                n
            ))),
            _ => Err(invalid("nonlinearities need exactly one of `shared` or `per_node`")),
        }
    }
}

impl InitialSpec {
    pub fn states(&self, n: usize) -> Result<Vec<Vec<f64>>, ScenarioError> {
        let states = match (&self.explicit, &self.random) {
            (Some(e), None) => e.clone().into_vec(),
            (None, Some(r)) => {
                if r.count == 0 {
                    return Err(invalid("random initial `count` must be at least 1"));
                }
                if !(r.low.is_finite() && r.high.is_finite() && r.low < r.high) {
                    return Err(invalid("random initial bounds need finite `low` < `high`"));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(r.seed);
                (0..r.count)
                    .map(|_| (0..n).map(|_| rng.gen_range(r.low..r.high)).collect())
                    .collect()
            }
            _ => return Err(invalid("initial needs exactly one of `explicit` or `random`")),
        };
        if states.is_empty() {
            return Err(invalid("no initial states given"));
        }
        for (k, x) in states.iter().enumerate() {
            if x.len() != n {
                return Err(invalid(format!("initial state {k} has {} entries for {n} nodes", x.len())));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("initial state {k} is not finite")));
            }
        }
        Ok(states)
    }
}

//! Experiment configuration files.
//!
//! Configs are TOML documents (conventionally `*.cfg`) with a mandatory
//! `config_version = 1`. A `run.json` written by `simulate` or `sweep` is
//! also accepted: its `config` member is the fully resolved config of that
//! run. See `crates/core/examples/decision_chain5.cfg` for a complete example.
//!
//! ```toml
//! config_version = 1
//! sigma = 1.0            # coupling strength
//! replicates = 50
//! output_dir = "out"
//!
//! [graph]                # chain | ring | complete | star | edge_list | erdos_renyi
//! kind = "chain"
//! nodes = 5
//!
//! [model]                # bistable | integrator | linear | ddm
//! kind = "bistable"
//! r = 5.0
//! sigma_n = 4.0
//!
//! [sim]
//! dt = 1e-4
//! horizon = 20.0
//! seed = 1
//!
//! [x0]                   # exactly one of `values` or `normal`
//! normal = { mean = 0.0, std = 5.0, seed = 2 }
//!
//! [sweep]                # optional
//! parameter = "sigma_n"  # or "sigma"
//! values = [0.1, 2.0, 4.0, 8.0]
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::analysis::{McOptions, X0Sampler};
use crate::graph::{build_topology, Graph, Topology};
use crate::models::{DomainBox, NodeModel};
use crate::sde::SimConfig;

pub const CONFIG_VERSION: u32 = 1;

/// A configuration problem, anchored to a line of the source when possible.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "config line {line}: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    Chain {
        nodes: usize,
    },
    Ring {
        nodes: usize,
    },
    Complete {
        nodes: usize,
    },
    Star {
        nodes: usize,
    },
    /// Inline `edges` (with `nodes`) or a `file` in the `nodes N` edge-list format.
    EdgeList {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        nodes: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        edges: Option<Vec<(usize, usize)>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        file: Option<PathBuf>,
    },
    ErdosRenyi {
        nodes: usize,
        p: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Bistable {
        r: f64,
        sigma_n: f64,
    },
    Integrator {
        #[serde(default = "one")]
        dim: usize,
    },
    /// Row-major square matrices.
    Linear {
        drift: Vec<Vec<f64>>,
        diffusion: Vec<Vec<f64>>,
    },
    Ddm {
        beta: f64,
        sigma_b: f64,
    },
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalSpec {
    pub mean: f64,
    pub std: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct X0Spec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal: Option<NormalSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    SigmaN,
    Sigma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantsMode {
    Analytic,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSpec {
    pub window_fraction: f64,
    pub floor: f64,
    pub sync_tolerance: f64,
    pub min_r_squared: f64,
    pub constants: ConstantsMode,
    /// Sampling settings for `constants = "sampled"`.
    pub sample_count: usize,
    pub box_lower: f64,
    pub box_upper: f64,
    pub constants_seed: u64,
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        let mc = McOptions::default();
        AnalysisSpec {
            window_fraction: mc.window_fraction,
            floor: mc.floor,
            sync_tolerance: mc.sync_tolerance,
            min_r_squared: mc.min_r_squared,
            constants: ConstantsMode::Analytic,
            sample_count: 100_000,
            box_lower: -10.0,
            box_upper: 10.0,
            constants_seed: 0,
        }
    }
}

fn default_replicates() -> usize {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub config_version: u32,
    pub sigma: f64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub graph: GraphSpec,
    pub model: ModelSpec,
    #[serde(default)]
    pub sim: SimConfig,
    pub x0: X0Spec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub analysis: AnalysisSpec,
}

impl ExperimentConfig {
    /// Reads a config file (TOML, or a `run.json` echo).
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError { line: None, message: format!("cannot read {}: {e}", path.display()) })?;
        let base = path.parent().unwrap_or(Path::new("."));
        if text.trim_start().starts_with('{') {
            Self::from_run_json(&text, base)
        } else {
            Self::from_toml_str(&text, base)
        }
    }

    /// Parses TOML; relative `file` paths resolve against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError {
            line: e.span().map(|s| line_of_offset(text, s.start)),
            message: e.message().to_string(),
        })?;
        cfg.resolve_paths(base_dir);
        cfg.validate()
            .map_err(|(section, key, message)| ConfigError { line: find_key_line(text, section, key), message })?;
        Ok(cfg)
    }

    fn from_run_json(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        #[derive(Deserialize)]
        struct Echo {
            config: ExperimentConfig,
        }
        let json_err = |e: serde_json::Error| ConfigError { line: Some(e.line()), message: e.to_string() };
        let mut cfg = serde_json::from_str::<Echo>(text).map_err(json_err)?.config;
        cfg.resolve_paths(base_dir);
        cfg.validate().map_err(|(_, _, message)| ConfigError { line: None, message })?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base_dir: &Path) {
        if let GraphSpec::EdgeList { file: Some(f), .. } = &mut self.graph {
            if f.is_relative() {
                *f = base_dir.join(&*f);
            }
        }
    }

    /// Semantic checks. Errors carry the `(section, key)` they concern.
    fn validate(&self) -> Result<(), (&'static str, &'static str, String)> {
        if self.config_version != CONFIG_VERSION {
            return Err((
                "",
                "config_version",
                format!("unsupported config_version {} (expected {CONFIG_VERSION})", self.config_version),
            ));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(("", "sigma", format!("sigma must be finite and >= 0, got {}", self.sigma)));
        }
        if self.replicates == 0 {
            return Err(("", "replicates", "replicates must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(("", "threads", "threads must be at least 1".into()));
        }
        match &self.graph {
            GraphSpec::Chain { nodes: 0 }
            | GraphSpec::Ring { nodes: 0 }
            | GraphSpec::Complete { nodes: 0 }
            | GraphSpec::Star { nodes: 0 }
            | GraphSpec::ErdosRenyi { nodes: 0, .. }
            | GraphSpec::EdgeList { nodes: Some(0), .. } => {
                return Err(("graph", "nodes", "nodes must be at least 1".into()))
            }
            GraphSpec::ErdosRenyi { p, .. } if !(0.0..=1.0).contains(p) => {
                return Err(("graph", "p", format!("p must be in [0, 1], got {p}")))
            }
            _ => {}
        }
        if let GraphSpec::EdgeList { nodes, edges, file } = &self.graph {
            match (edges, file) {
                (Some(_), None) if nodes.is_none() => {
                    return Err(("graph", "edges", "inline edges need `nodes`".into()))
                }
                (Some(_), None) | (None, Some(_)) => {}
                _ => return Err(("graph", "kind", "edge_list needs exactly one of `edges` or `file`".into())),
            }
        }
        self.sim.validate().map_err(|e| ("sim", "dt", e.to_string()))?;
        match (&self.x0.values, &self.x0.normal) {
            (Some(v), None) => {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(("x0", "values", "x0 values must be finite".into()));
                }
            }
            (None, Some(n)) => {
                if !(n.std.is_finite() && n.std >= 0.0 && n.mean.is_finite()) {
                    return Err(("x0", "normal", "x0 normal needs finite mean and std >= 0".into()));
                }
            }
            _ => return Err(("x0", "", "x0 needs exactly one of `values` or `normal`".into())),
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() || sweep.values.iter().any(|v| !v.is_finite()) {
                return Err(("sweep", "values", "sweep values must be finite and non-empty".into()));
            }
            if sweep.parameter == SweepParameter::SigmaN && !matches!(self.model, ModelSpec::Bistable { .. }) {
                return Err(("sweep", "parameter", "sweeping sigma_n needs the bistable model".into()));
            }
            if sweep.parameter == SweepParameter::Sigma && sweep.values.iter().any(|v| *v < 0.0) {
                return Err(("sweep", "values", "coupling strengths must be >= 0".into()));
            }
        }
        let a = &self.analysis;
        if !(a.window_fraction > 0.0 && a.window_fraction < 1.0) {
            return Err(("analysis", "window_fraction", "window_fraction must be in (0, 1)".into()));
        }
        if !(a.box_upper > a.box_lower) {
            return Err(("analysis", "box_upper", "sampling box needs box_lower < box_upper".into()));
        }
        Ok(())
    }

    pub fn build_graph(&self) -> crate::Result<Graph> {
        match &self.graph {
            GraphSpec::Chain { nodes } => build_topology(&Topology::Chain, *nodes),
            GraphSpec::Ring { nodes } => build_topology(&Topology::Ring, *nodes),
            GraphSpec::Complete { nodes } => build_topology(&Topology::Complete, *nodes),
            GraphSpec::Star { nodes } => build_topology(&Topology::Star, *nodes),
            GraphSpec::ErdosRenyi { nodes, p, seed } => {
                build_topology(&Topology::ErdosRenyi { p: *p, seed: *seed }, *nodes)
            }
            GraphSpec::EdgeList { nodes, edges, file } => match (edges, file) {
                (Some(edges), _) => build_topology(&Topology::EdgeList(edges.clone()), nodes.unwrap_or(0)),
                (None, Some(path)) => {
                    let g = Graph::from_edge_list_str(&std::fs::read_to_string(path)?)?;
                    if nodes.is_some_and(|n| n != g.node_count()) {
                        return Err(crate::Error::Invalid(format!(
                            "edge file {} declares {} nodes, config says {}",
                            path.display(),
                            g.node_count(),
                            nodes.unwrap()
                        )));
                    }
                    Ok(g)
                }
                (None, None) => Err(crate::Error::Invalid("edge_list graph without edges".into())),
            },
        }
    }

    pub fn build_model(&self) -> crate::Result<NodeModel> {
        match &self.model {
            ModelSpec::Bistable { r, sigma_n } => NodeModel::bistable(*r, *sigma_n),
            ModelSpec::Integrator { dim } => NodeModel::integrator(*dim),
            ModelSpec::Linear { drift, diffusion } => NodeModel::linear(to_matrix(drift)?, to_matrix(diffusion)?),
            ModelSpec::Ddm { beta, sigma_b } => NodeModel::ddm(*beta, *sigma_b),
        }
    }

    pub fn x0_sampler(&self) -> X0Sampler {
        match (&self.x0.values, &self.x0.normal) {
            (Some(v), _) => X0Sampler::Fixed(v.clone()),
            (None, Some(n)) => X0Sampler::Normal { mean: n.mean, std: n.std, seed: n.seed },
            (None, None) => X0Sampler::Fixed(Vec::new()),
        }
    }

    pub fn mc_options(&self, threads: Option<usize>) -> McOptions {
        McOptions {
            window_fraction: self.analysis.window_fraction,
            floor: self.analysis.floor,
            sync_tolerance: self.analysis.sync_tolerance,
            min_r_squared: self.analysis.min_r_squared,
            threads,
        }
    }

    pub fn sampling_box(&self, dim: usize) -> crate::Result<DomainBox> {
        DomainBox::cube(dim, self.analysis.box_lower, self.analysis.box_upper)
    }

    /// Copy of this config with the sweep parameter set to `value`.
    pub fn with_sweep_value(&self, parameter: SweepParameter, value: f64) -> ExperimentConfig {
        let mut out = self.clone();
        match (parameter, &mut out.model) {
            (SweepParameter::SigmaN, ModelSpec::Bistable { sigma_n, .. }) => *sigma_n = value,
            (SweepParameter::Sigma, _) => out.sigma = value,
            (SweepParameter::SigmaN, _) => {}
        }
        out
    }
}

fn to_matrix(rows: &[Vec<f64>]) -> crate::Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(crate::Error::Invalid("matrices must be square and non-empty".into()));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// 1-based line of `key` inside `[section]` (top level when `section` is
/// empty); falls back to the section header, or `None`.
fn find_key_line(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = "";
    let mut header_line = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim();
            if current == section {
                header_line = Some(i + 1);
            }
            continue;
        }
        if current == section && !key.is_empty() {
            let lhs = line.split('=').next().unwrap_or("").trim();
            if lhs == key {
                return Some(i + 1);
            }
        }
    }
    header_line
}

//! Experiment configuration: TOML parsing and validation.
//!
//! Layout of a config file (unknown keys are rejected):
//!
//! ```toml
//! [experiment]
//! algorithm = "pe"              # "pe" | "pb"
//! max_iters = 100000
//! stop_v_ratio = 1e-8           # stop when V <= ratio * V0
//! tol_x = 1e-12                 # inner root-find width tolerance
//! skip_gap = 1e-14              # skip gossips with |xi - xj| <= this
//! seed = 42
//! trace_path = "out/run.jsonl"  # optional; relative to the config file
//! summary_path = "out/run.json" # optional
//! include_estimates = false     # trace per-node estimates (N <= 16 only)
//! expect = "converge"           # "converge" | "stall" (verify mode)
//!
//! [pb]                          # only read when algorithm = "pb"
//! rounds = "fixed:4"            # "R" | "fixed:R" | "adaptive:DELTA"
//!
//! [objectives]
//! specs = ["quadratic:0,0", "quadratic:4,0"]
//!
//! [topology]
//! n_nodes = 2
//! mode = "static"               # "static" | "periodic" | "scripted"
//! edges = [[1, 2]]              # static mode
//! # frames = [[[1,2]], [[2,3]]] # periodic/scripted mode
//!
//! [scheduler]
//! kind = "uniform-random-edge"  # "round-robin" | "scripted" | "clique-partition"
//! # pairs = [[1,2], [2,1]]      # scripted: (initiator, peer) per iteration
//! # groups = [[1,2,3], [4,5]]   # clique-partition
//!
//! [verify]                      # optional thresholds for `verify`
//! connect_window = 0            # 0 means 50 * n_nodes
//! plateau_window = 100
//! plateau_eps = 1e-15
//! stall_min_v_ratio = 1e-3
//! ```
//!
//! Randomized schedulers draw their seed from `experiment.seed`, so one
//! value pins the whole run.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::engines::RoundsPolicy;
use crate::network::{Edge, GossipPair, NodeId, SchedulerSpec, TopologyMode, TopologySpec};
use crate::objective::ObjectiveSpec;

use super::HarnessError;

/// Which engine drives the run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    Pe,
    Pb(RoundsPolicy),
}

impl Algorithm {
    pub fn label(&self) -> String {
        match self {
            Algorithm::Pe => "pe".to_owned(),
            Algorithm::Pb(RoundsPolicy::Fixed(r)) => format!("pb(R={r})"),
            Algorithm::Pb(RoundsPolicy::Adaptive(d)) => format!("pb(adaptive:{d})"),
        }
    }
}

/// What the verification suite should require of the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Expectation {
    Converge,
    Stall,
}

/// Scheduler choice without its seed; the experiment seed is injected when
/// the runtime scheduler is built.
#[derive(Debug, Clone, PartialEq)]
pub enum SchedulerKind {
    UniformRandomEdge,
    RoundRobin,
    Scripted(Vec<GossipPair>),
    CliquePartition(Vec<Vec<NodeId>>),
}

impl SchedulerKind {
    pub fn to_spec(&self, seed: u64) -> SchedulerSpec {
        match self {
            SchedulerKind::UniformRandomEdge => SchedulerSpec::UniformRandomEdge { seed },
            SchedulerKind::RoundRobin => SchedulerSpec::RoundRobin,
            SchedulerKind::Scripted(pairs) => SchedulerSpec::Scripted {
                pairs: pairs.clone(),
            },
            SchedulerKind::CliquePartition(groups) => SchedulerSpec::CliquePartition {
                seed,
                groups: groups.clone(),
            },
        }
    }
}

/// Thresholds used by the verification suite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyParams {
    /// Trailing window for the connectivity surrogate; 0 means `50 * N`.
    pub connect_window: usize,
    /// Number of trailing steps over which a plateau is measured.
    pub plateau_window: usize,
    /// Plateau means every |ΔV| in the window is below this.
    pub plateau_eps: f64,
    /// A stall must leave `V > ratio * V0`.
    pub stall_min_v_ratio: f64,
}

impl Default for VerifyParams {
    fn default() -> Self {
        Self {
            connect_window: 0,
            plateau_window: 100,
            plateau_eps: 1e-15,
            stall_min_v_ratio: 1e-3,
        }
    }
}

/// A fully validated experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub specs: Vec<ObjectiveSpec>,
    pub topology: TopologySpec,
    pub scheduler: SchedulerKind,
    pub algorithm: Algorithm,
    pub max_iters: u64,
    pub stop_v_ratio: f64,
    pub tol_x: f64,
    pub skip_gap: f64,
    pub seed: u64,
    pub trace_path: Option<PathBuf>,
    pub summary_path: Option<PathBuf>,
    pub include_estimates: bool,
    pub expect: Expectation,
    pub verify: VerifyParams,
}

impl ExperimentConfig {
    /// Loads and validates a config file; relative output paths are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::io(path.display().to_string(), e))?;
        let mut config = Self::from_toml_str(&text)
            .map_err(|e| HarnessError::config(format!("{}: {e}", path.display())))?;
        if let Some(dir) = path.parent() {
            config.trace_path = config.trace_path.map(|p| resolve(dir, p));
            config.summary_path = config.summary_path.map(|p| resolve(dir, p));
        }
        Ok(config)
    }

    /// Parses and validates config text; relative output paths are kept
    /// as written.
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| HarnessError::config(e.to_string()))?;
        raw.build()
    }

    pub fn n_nodes(&self) -> u32 {
        self.topology.n_nodes()
    }

    /// The scheduler spec with the experiment seed injected.
    pub fn scheduler_spec(&self) -> SchedulerSpec {
        self.scheduler.to_spec(self.seed)
    }
}

fn resolve(dir: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        dir.join(p)
    }
}

/// Parses `"R"`, `"fixed:R"`, or `"adaptive:DELTA"`.
pub fn parse_rounds_policy(s: &str) -> Result<RoundsPolicy, String> {
    let t = s.trim();
    let fixed = |digits: &str| -> Result<RoundsPolicy, String> {
        let r: u32 = digits
            .trim()
            .parse()
            .map_err(|e| format!("bad rounds `{t}`: {e}"))?;
        if r == 0 {
            return Err(format!("bad rounds `{t}`: must be at least 1"));
        }
        Ok(RoundsPolicy::Fixed(r))
    };
    if let Some(rest) = t.strip_prefix("fixed:") {
        return fixed(rest);
    }
    if let Some(rest) = t.strip_prefix("adaptive:") {
        let delta: f64 = rest
            .trim()
            .parse()
            .map_err(|e| format!("bad adaptive target `{t}`: {e}"))?;
        if !delta.is_finite() || delta <= 0.0 {
            return Err(format!(
                "bad adaptive target `{t}`: must be positive and finite"
            ));
        }
        return Ok(RoundsPolicy::Adaptive(delta));
    }
    fixed(t)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: RawExperiment,
    pb: Option<RawPb>,
    objectives: RawObjectives,
    topology: RawTopology,
    scheduler: RawScheduler,
    verify: Option<RawVerify>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    algorithm: String,
    #[serde(default = "defaults::max_iters")]
    max_iters: u64,
    #[serde(default = "defaults::stop_v_ratio")]
    stop_v_ratio: f64,
    #[serde(default = "defaults::tol_x")]
    tol_x: f64,
    #[serde(default = "defaults::skip_gap")]
    skip_gap: f64,
    /// Interpreted as a 64-bit pattern; negative values wrap.
    #[serde(default)]
    seed: i64,
    trace_path: Option<String>,
    summary_path: Option<String>,
    #[serde(default)]
    include_estimates: bool,
    expect: Option<String>,
}

mod defaults {
    pub fn max_iters() -> u64 {
        100_000
    }
    pub fn stop_v_ratio() -> f64 {
        1e-8
    }
    pub fn tol_x() -> f64 {
        1e-12
    }
    pub fn skip_gap() -> f64 {
        1e-14
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPb {
    rounds: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObjectives {
    specs: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTopology {
    n_nodes: u32,
    mode: String,
    edges: Option<Vec<[u32; 2]>>,
    frames: Option<Vec<Vec<[u32; 2]>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScheduler {
    kind: String,
    pairs: Option<Vec<[u32; 2]>>,
    groups: Option<Vec<Vec<u32>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVerify {
    connect_window: Option<usize>,
    plateau_window: Option<usize>,
    plateau_eps: Option<f64>,
    stall_min_v_ratio: Option<f64>,
}

fn edge_list(pairs: &[[u32; 2]]) -> Result<Vec<Edge>, HarnessError> {
    pairs
        .iter()
        .map(|&[i, j]| {
            Edge::new(NodeId(i), NodeId(j)).map_err(|e| HarnessError::config(e.to_string()))
        })
        .collect()
}

impl RawConfig {
    fn build(self) -> Result<ExperimentConfig, HarnessError> {
        let exp = self.experiment;
        if exp.max_iters == 0 {
            return Err(HarnessError::config(
                "experiment.max_iters must be at least 1",
            ));
        }
        if exp.stop_v_ratio.is_nan() || exp.stop_v_ratio < 0.0 || exp.stop_v_ratio >= 1.0 {
            return Err(HarnessError::config(
                "experiment.stop_v_ratio must satisfy 0 <= ratio < 1",
            ));
        }
        if !exp.tol_x.is_finite() || exp.tol_x <= 0.0 {
            return Err(HarnessError::config(
                "experiment.tol_x must be positive and finite",
            ));
        }
        if !exp.skip_gap.is_finite() {
            return Err(HarnessError::config("experiment.skip_gap must be finite"));
        }

        let algorithm = match exp.algorithm.as_str() {
            "pe" => Algorithm::Pe,
            "pb" => {
                let rounds = self
                    .pb
                    .as_ref()
                    .map(|p| p.rounds.as_str())
                    .unwrap_or("fixed:4");
                Algorithm::Pb(parse_rounds_policy(rounds).map_err(HarnessError::config)?)
            }
            other => {
                return Err(HarnessError::config(format!(
                    "experiment.algorithm must be `pe` or `pb`, got `{other}`"
                )))
            }
        };

        let expect = match exp.expect.as_deref() {
            None | Some("converge") => Expectation::Converge,
            Some("stall") => Expectation::Stall,
            Some(other) => {
                return Err(HarnessError::config(format!(
                    "experiment.expect must be `converge` or `stall`, got `{other}`"
                )))
            }
        };

        let specs: Vec<ObjectiveSpec> = self
            .objectives
            .specs
            .iter()
            .map(|s| {
                s.parse::<ObjectiveSpec>()
                    .map_err(|e| HarnessError::config(e.to_string()))
            })
            .collect::<Result<_, _>>()?;

        let topo = self.topology;
        let mode = match topo.mode.as_str() {
            "static" => {
                let edges = topo.edges.as_deref().ok_or_else(|| {
                    HarnessError::config("topology.edges required for static mode")
                })?;
                TopologyMode::Static(edge_list(edges)?)
            }
            "periodic" | "scripted" => {
                let frames = topo.frames.as_deref().ok_or_else(|| {
                    HarnessError::config(format!("topology.frames required for {} mode", topo.mode))
                })?;
                let frames = frames
                    .iter()
                    .map(|f| edge_list(f))
                    .collect::<Result<Vec<_>, _>>()?;
                if topo.mode == "periodic" {
                    TopologyMode::Periodic(frames)
                } else {
                    TopologyMode::Scripted(frames)
                }
            }
            other => {
                return Err(HarnessError::config(format!(
                    "topology.mode must be static, periodic, or scripted, got `{other}`"
                )))
            }
        };
        let topology = TopologySpec::new(topo.n_nodes, mode)
            .map_err(|e| HarnessError::config(e.to_string()))?;

        if specs.len() != topology.n_nodes() as usize {
            return Err(HarnessError::config(format!(
                "{} objective specs for {} nodes",
                specs.len(),
                topology.n_nodes()
            )));
        }
        if exp.include_estimates && topology.n_nodes() > 16 {
            return Err(HarnessError::config(
                "include_estimates is only supported for n_nodes <= 16",
            ));
        }

        let sched = self.scheduler;
        let scheduler = match sched.kind.as_str() {
            "uniform-random-edge" => SchedulerKind::UniformRandomEdge,
            "round-robin" => SchedulerKind::RoundRobin,
            "scripted" => {
                let pairs = sched
                    .pairs
                    .as_deref()
                    .ok_or_else(|| HarnessError::config("scheduler.pairs required for scripted"))?;
                let pairs = pairs
                    .iter()
                    .map(|&[i, j]| {
                        GossipPair::new(NodeId(i), NodeId(j))
                            .map_err(|e| HarnessError::config(e.to_string()))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                SchedulerKind::Scripted(pairs)
            }
            "clique-partition" => {
                let groups = sched.groups.as_deref().ok_or_else(|| {
                    HarnessError::config("scheduler.groups required for clique-partition")
                })?;
                let groups = groups
                    .iter()
                    .map(|g| g.iter().map(|&n| NodeId(n)).collect())
                    .collect();
                SchedulerKind::CliquePartition(groups)
            }
            other => {
                return Err(HarnessError::config(format!(
                    "scheduler.kind `{other}` is not one of uniform-random-edge, round-robin, scripted, clique-partition"
                )))
            }
        };

        let mut verify = VerifyParams::default();
        if let Some(v) = self.verify {
            if let Some(w) = v.connect_window {
                verify.connect_window = w;
            }
            if let Some(w) = v.plateau_window {
                if w == 0 {
                    return Err(HarnessError::config(
                        "verify.plateau_window must be at least 1",
                    ));
                }
                verify.plateau_window = w;
            }
            if let Some(e) = v.plateau_eps {
                verify.plateau_eps = e;
            }
            if let Some(r) = v.stall_min_v_ratio {
                verify.stall_min_v_ratio = r;
            }
        }

        Ok(ExperimentConfig {
            specs,
            topology,
            scheduler,
            algorithm,
            max_iters: exp.max_iters,
            stop_v_ratio: exp.stop_v_ratio,
            tol_x: exp.tol_x,
            skip_gap: exp.skip_gap,
            seed: exp.seed as u64,
            trace_path: exp.trace_path.map(PathBuf::from),
            summary_path: exp.summary_path.map(PathBuf::from),
            include_estimates: exp.include_estimates,
            expect,
            verify,
        })
    }
}

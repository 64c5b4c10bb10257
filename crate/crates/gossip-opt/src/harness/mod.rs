//! Experiment harness: configuration, run loop, trace output, comparison,
//! and the verification suite behind the CLI.
//!
//! A single TOML file describes an experiment (objectives, topology,
//! scheduler, algorithm, stopping rule, seed, output paths). Runs are
//! deterministic given the config and seed: the trace — one JSON object per
//! iteration — is byte-identical across repeated runs. The summary is a
//! single JSON document (its `wall_time` field is the one intentionally
//! non-reproducible value).

mod compare;
mod config;
mod run;
mod verify;

pub use compare::{compare_algorithms, render_comparison_table, ComparisonRow};
pub use config::{
    parse_rounds_policy, Algorithm, Expectation, ExperimentConfig, SchedulerKind, VerifyParams,
};
pub use run::{
    execute, run_experiment, schedule_dump, ExecOptions, InvariantViolation, RunArtifacts,
    RunSummary,
};
pub use verify::{verify_suite, CheckStatus, ConfigOutcome, SuiteOutcome};

use thiserror::Error;

use crate::diagnostics::DiagnosticsError;
use crate::engines::EngineError;
use crate::network::NetworkError;
use crate::objective::ObjectiveError;
use crate::rootfind::RootfindError;

/// Harness failure, split by how the process should exit: configuration
/// and I/O problems (exit 2) versus numerical failures inside a run
/// (exit 4).
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    /// A numerical failure aborted the run, with iteration context.
    #[error("numerical failure at iteration {k} on pair ({i}, {j}): {detail}")]
    Numerical {
        k: u64,
        i: u32,
        j: u32,
        detail: String,
    },
    /// A numerical failure outside the iteration loop.
    #[error("numerical failure: {0}")]
    NumericalSetup(String),
}

impl HarnessError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        HarnessError::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the failure is numerical rather than configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            HarnessError::Numerical { .. } | HarnessError::NumericalSetup(_)
        )
    }
}

impl From<ObjectiveError> for HarnessError {
    fn from(e: ObjectiveError) -> Self {
        match e {
            ObjectiveError::DomainViolation { .. } => HarnessError::NumericalSetup(e.to_string()),
            _ => HarnessError::Config(e.to_string()),
        }
    }
}

impl From<RootfindError> for HarnessError {
    fn from(e: RootfindError) -> Self {
        HarnessError::NumericalSetup(e.to_string())
    }
}

impl From<DiagnosticsError> for HarnessError {
    fn from(e: DiagnosticsError) -> Self {
        HarnessError::NumericalSetup(e.to_string())
    }
}

impl From<NetworkError> for HarnessError {
    fn from(e: NetworkError) -> Self {
        HarnessError::Config(e.to_string())
    }
}

pub(crate) fn engine_error_at(k: u64, i: u32, j: u32, e: EngineError) -> HarnessError {
    HarnessError::Numerical {
        k,
        i,
        j,
        detail: e.to_string(),
    }
}

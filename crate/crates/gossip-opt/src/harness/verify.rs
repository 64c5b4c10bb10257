//! The verification suite.
//!
//! Walks a directory of experiment configs (sorted by file name), runs each
//! one with full invariant checking, and judges it against its declared
//! expectation:
//!
//! * `expect = "converge"` — the run must reach its stop threshold with no
//!   invariant violations.
//! * `expect = "stall"` — the run must *not* converge, the Lyapunov value
//!   must plateau (every |ΔV| below `plateau_eps` across the trailing
//!   `plateau_window` steps) at a level above `stall_min_v_ratio · V₀`, and
//!   the trailing gossip window must fail the connectivity check. That is
//!   the signature of a starved gossip pattern, reported as an expected
//!   stall rather than a failure.
//!
//! The suite result is machine-readable; the first failure's category
//! decides the process exit code.

use std::path::Path;

use serde::Serialize;

use crate::network::{default_connect_window, window_connected};

use super::config::{Expectation, ExperimentConfig};
use super::run::{execute, ExecOptions, InvariantViolation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Pass,
    ConfigError,
    InvariantFailure,
    NumericalFailure,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfigOutcome {
    pub path: String,
    pub status: CheckStatus,
    pub expectation: Option<Expectation>,
    /// First failing invariant or error, when not a pass.
    pub detail: String,
    pub violations: Vec<InvariantViolation>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteOutcome {
    pub suite: String,
    pub passed: bool,
    pub results: Vec<ConfigOutcome>,
}

impl SuiteOutcome {
    /// Process exit code: 0 all pass, else the first failure's category
    /// (2 config, 3 invariant/expectation, 4 numerical).
    pub fn exit_code(&self) -> i32 {
        for result in &self.results {
            match result.status {
                CheckStatus::Pass => {}
                CheckStatus::ConfigError => return 2,
                CheckStatus::InvariantFailure => return 3,
                CheckStatus::NumericalFailure => return 4,
            }
        }
        0
    }
}

/// Runs every `.toml` config under `dir` (non-recursive, sorted by name).
pub fn verify_suite(dir: &Path) -> SuiteOutcome {
    let mut results = Vec::new();
    let mut paths: Vec<_> = match std::fs::read_dir(dir) {
        Ok(entries) => entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "toml"))
            .collect(),
        Err(e) => {
            results.push(ConfigOutcome {
                path: dir.display().to_string(),
                status: CheckStatus::ConfigError,
                expectation: None,
                detail: format!("cannot read suite directory: {e}"),
                violations: Vec::new(),
            });
            return SuiteOutcome {
                suite: dir.display().to_string(),
                passed: false,
                results,
            };
        }
    };
    paths.sort();
    if paths.is_empty() {
        results.push(ConfigOutcome {
            path: dir.display().to_string(),
            status: CheckStatus::ConfigError,
            expectation: None,
            detail: "suite directory contains no .toml configs".to_owned(),
            violations: Vec::new(),
        });
    }
    for path in paths {
        results.push(verify_config(&path));
    }
    let passed = results.iter().all(|r| r.status == CheckStatus::Pass);
    SuiteOutcome {
        suite: dir.display().to_string(),
        passed,
        results,
    }
}

fn verify_config(path: &Path) -> ConfigOutcome {
    let shown = path.display().to_string();
    let config = match ExperimentConfig::load(path) {
        Ok(c) => c,
        Err(e) => {
            return ConfigOutcome {
                path: shown,
                status: CheckStatus::ConfigError,
                expectation: None,
                detail: e.to_string(),
                violations: Vec::new(),
            }
        }
    };
    let expectation = config.expect;
    let artifacts = match execute(
        &config,
        &ExecOptions {
            check_invariants: true,
        },
    ) {
        Ok(a) => a,
        Err(e) => {
            let status = if e.is_numerical() {
                CheckStatus::NumericalFailure
            } else {
                CheckStatus::ConfigError
            };
            return ConfigOutcome {
                path: shown,
                status,
                expectation: Some(expectation),
                detail: e.to_string(),
                violations: Vec::new(),
            };
        }
    };

    if let Some(first) = artifacts.violations.first() {
        return ConfigOutcome {
            path: shown,
            status: CheckStatus::InvariantFailure,
            expectation: Some(expectation),
            detail: format!(
                "invariant `{}` violated at k={}: {}",
                first.invariant, first.k, first.detail
            ),
            violations: artifacts.violations.clone(),
        };
    }

    let detail = match expectation {
        Expectation::Converge => {
            if artifacts.summary.converged {
                None
            } else {
                Some(format!(
                    "expected convergence: V stopped at {} (V0 = {}) after {} iterations",
                    artifacts.summary.final_v, artifacts.summary.v0, artifacts.summary.iters_run
                ))
            }
        }
        Expectation::Stall => judge_stall(&config, &artifacts),
    };

    match detail {
        None => ConfigOutcome {
            path: shown,
            status: CheckStatus::Pass,
            expectation: Some(expectation),
            detail: String::new(),
            violations: Vec::new(),
        },
        Some(detail) => ConfigOutcome {
            path: shown,
            status: CheckStatus::InvariantFailure,
            expectation: Some(expectation),
            detail,
            violations: Vec::new(),
        },
    }
}

fn judge_stall(config: &ExperimentConfig, artifacts: &super::run::RunArtifacts) -> Option<String> {
    let summary = &artifacts.summary;
    let params = config.verify;
    if summary.converged {
        return Some("expected a stall but the run converged".to_owned());
    }
    if artifacts.rows.len() < params.plateau_window {
        return Some(format!(
            "only {} iterations ran; cannot measure a {}-step plateau",
            artifacts.rows.len(),
            params.plateau_window
        ));
    }
    let tail = &artifacts.rows[artifacts.rows.len() - params.plateau_window..];
    let max_dv = tail.iter().map(|r| r.dv_observed.abs()).fold(0.0, f64::max);
    if max_dv >= params.plateau_eps {
        return Some(format!(
            "no plateau: max |ΔV| over the last {} steps is {max_dv}",
            params.plateau_window
        ));
    }
    let floor = params.stall_min_v_ratio * summary.v0;
    if summary.final_v <= floor {
        return Some(format!(
            "V fell to {} which is below the stall floor {floor}",
            summary.final_v
        ));
    }
    let window = if params.connect_window == 0 {
        default_connect_window(config.n_nodes())
    } else {
        params.connect_window
    };
    if window_connected(&artifacts.history, window, config.n_nodes()) {
        return Some(format!(
            "trailing {window}-gossip window is connected; this is not a starved pattern"
        ));
    }
    None
}

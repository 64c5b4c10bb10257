//! The experiment run loop.
//!
//! One run: initialize every node at its own minimizer, then apply the
//! configured engine to the scheduler's pair sequence, recording one
//! [`DiagnosticsRow`] per iteration, until the Lyapunov value falls to
//! `stop_v_ratio · V₀` or the iteration budget runs out.
//!
//! With invariant checking enabled the loop also validates, at every step,
//! the contracts both engines promise: Lyapunov descent, the equalizing
//! drop identity, conservation drift inside its budget, envelope nesting,
//! idle-node bit-identity, pair membership in `E(k)`, order preservation,
//! gap contraction, and message accounting. Violations are collected, not
//! fatal; the verification suite turns them into exit status.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    conservation_drift_budget, conservation_residual, lyapunov, predicted_drop_pe, DiagnosticsRow,
};
use crate::engines::{
    init, pb_step, pe_step, select_rounds, ConsensusState, PbStepOutcome, PeStepOutcome,
    StepParams, TxCounters,
};
use crate::network::{GossipPair, Scheduler};
use crate::rootfind::solve_global_optimum;

use super::config::{Algorithm, ExperimentConfig};
use super::{engine_error_at, HarnessError};

/// Tolerance used once per run to pin the network optimum for diagnostics.
const X_STAR_TOL: f64 = 1e-13;

/// Final report of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub iters_run: u64,
    pub converged: bool,
    pub final_v: f64,
    pub v0: f64,
    pub residual_final: f64,
    pub tx_reals: u64,
    pub tx_functions: u64,
    pub tx_tokens: u64,
    /// Seconds; the only intentionally non-reproducible field.
    pub wall_time: f64,
}

/// A failed step-level contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantViolation {
    pub k: u64,
    pub invariant: String,
    pub detail: String,
}

/// Execution switches for [`execute`].
#[derive(Debug, Clone, Copy, Default)]
pub struct ExecOptions {
    /// Check every step-level invariant and collect violations.
    pub check_invariants: bool,
}

/// Everything a run produced, in memory.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub summary: RunSummary,
    pub rows: Vec<DiagnosticsRow>,
    pub history: Vec<GossipPair>,
    pub violations: Vec<InvariantViolation>,
    pub x_star: f64,
    pub final_state: ConsensusState,
}

struct InvariantMonitor {
    enabled: bool,
    tol_x: f64,
    v0: f64,
    residual0: f64,
    drift_budget: f64,
    violations: Vec<InvariantViolation>,
}

impl InvariantMonitor {
    fn record(&mut self, k: u64, invariant: &str, detail: String) {
        self.violations.push(InvariantViolation {
            k,
            invariant: invariant.to_owned(),
            detail,
        });
    }

    fn check(&mut self, k: u64, invariant: &str, ok: bool, detail: impl FnOnce() -> String) {
        if self.enabled && !ok {
            self.record(k, invariant, detail());
        }
    }
}

/// Runs the experiment in memory.
pub fn execute(
    config: &ExperimentConfig,
    opts: &ExecOptions,
) -> Result<RunArtifacts, HarnessError> {
    let started = Instant::now();
    let specs = &config.specs;
    let params = StepParams {
        tol_x: config.tol_x,
        skip_gap: config.skip_gap,
    };

    let mut state = init(specs).map_err(|e| HarnessError::NumericalSetup(e.to_string()))?;
    let x_star = solve_global_optimum(specs, X_STAR_TOL)?;
    let v0 = lyapunov(&state, specs, x_star)?;
    let residual0 = conservation_residual(&state, specs)?;
    let stop_threshold = config.stop_v_ratio * v0;

    let mut monitor = InvariantMonitor {
        enabled: opts.check_invariants,
        tol_x: config.tol_x,
        v0,
        residual0,
        drift_budget: if opts.check_invariants {
            conservation_drift_budget(specs, state.envelope(), config.tol_x)?
        } else {
            0.0
        },
        violations: Vec::new(),
    };

    let mut scheduler = Scheduler::new(config.scheduler_spec(), config.n_nodes())?;
    let include_estimates = config.include_estimates && config.n_nodes() <= 16;

    let mut rows: Vec<DiagnosticsRow> = Vec::new();
    let mut history: Vec<GossipPair> = Vec::new();
    let mut v_prev = v0;
    let mut converged = v0 <= stop_threshold;
    let mut iters_run = 0;

    for k in 1..=config.max_iters {
        if converged {
            break;
        }
        let pair = scheduler.next_pair(k, &config.topology)?;
        history.push(pair);
        let gap_before = state.gap(pair);

        let (next, skipped, gap_after, dv_predicted) = match config.algorithm {
            Algorithm::Pe => {
                let (next, outcome) = pe_step(&state, specs, pair, &params)
                    .map_err(|e| engine_error_at(k, pair.initiator.0, pair.peer.0, e))?;
                let skipped = matches!(outcome, PeStepOutcome::Skipped { .. });
                let gap_after = next.gap(pair);
                let predicted =
                    predicted_drop_pe(&state, (pair.initiator, pair.peer), &next, specs)?;
                if let PeStepOutcome::Applied { equalized, .. } = outcome {
                    let (lo, hi) = (
                        state
                            .estimate(pair.initiator)
                            .min(state.estimate(pair.peer)),
                        state
                            .estimate(pair.initiator)
                            .max(state.estimate(pair.peer)),
                    );
                    monitor.check(k, "pe-range", equalized >= lo && equalized <= hi, || {
                        format!("equalized {equalized} outside [{lo}, {hi}]")
                    });
                    let delta = next.tx.reals - state.tx.reals;
                    monitor.check(k, "pe-message-count", delta == 2, || {
                        format!("{delta} real transmissions in one equalizing step")
                    });
                }
                (next, skipped, gap_after, Some(predicted))
            }
            Algorithm::Pb(policy) => {
                let rounds = select_rounds(policy, gap_before);
                let (next, outcome) = pb_step(&state, specs, pair, rounds, &params)
                    .map_err(|e| engine_error_at(k, pair.initiator.0, pair.peer.0, e))?;
                let skipped = matches!(outcome, PbStepOutcome::Skipped { .. });
                let gap_after = next.gap(pair);
                if let PbStepOutcome::Applied(t) = &outcome {
                    let contraction =
                        t.gap_before / f64::powi(2.0, rounds as i32) + 4.0 * params.tol_x;
                    monitor.check(k, "pb-gap-contraction", t.gap_after <= contraction, || {
                        format!("gap {} > {contraction} after R={rounds}", t.gap_after)
                    });
                    let reals = t.real_message_count();
                    monitor.check(
                        k,
                        "pb-message-counts",
                        (reals == u64::from(3 + rounds) || reals == u64::from(4 + rounds))
                            && t.token_count() == u64::from(rounds),
                        || format!("{reals} reals / {} tokens for R={rounds}", t.token_count()),
                    );
                    let (xi0, xj0) = (state.estimate(pair.initiator), state.estimate(pair.peer));
                    let (xi1, xj1) = (next.estimate(pair.initiator), next.estimate(pair.peer));
                    let order_kept = if xi0 <= xj0 {
                        xi1 <= xj1 + 4.0 * params.tol_x
                    } else {
                        xj1 <= xi1 + 4.0 * params.tol_x
                    };
                    monitor.check(k, "pb-order", order_kept, || {
                        format!("order flipped: ({xi0}, {xj0}) -> ({xi1}, {xj1})")
                    });
                }
                monitor.check(
                    k,
                    "pb-no-function-sharing",
                    next.tx.functions == state.tx.functions,
                    || "bisectioning step shipped a function descriptor".to_owned(),
                );
                (next, skipped, gap_after, None)
            }
        };

        let v = lyapunov(&next, specs, x_star)?;
        let residual = conservation_residual(&next, specs)?;
        let envelope = next.envelope();
        let tx_delta = TxCounters {
            reals: next.tx.reals - state.tx.reals,
            functions: next.tx.functions - state.tx.functions,
            tokens: next.tx.tokens - state.tx.tokens,
        };

        if monitor.enabled {
            let dv = v - v_prev;
            monitor.check(
                k,
                "v-non-increasing",
                dv <= 1e-9 * (1.0 + v_prev.abs()),
                || format!("V rose by {dv} from {v_prev}"),
            );
            let v_floor_ok = v >= -1e-12 * (1.0 + monitor.v0);
            monitor.check(k, "v-nonnegative", v_floor_ok, || format!("V = {v}"));
            if let Some(predicted) = dv_predicted {
                monitor.check(
                    k,
                    "pe-drop-identity",
                    (dv - predicted).abs() <= 1e-9 * (1.0 + v_prev.abs()),
                    || format!("observed ΔV {dv} vs predicted {predicted}"),
                );
            }
            let bound = monitor.residual0.abs() + (k as f64) * monitor.drift_budget;
            monitor.check(k, "conservation", residual.abs() <= bound, || {
                format!("|Σ f'| = {} beyond budget {bound}", residual.abs())
            });
            let (plo, phi) = state.envelope();
            let nested = envelope.0 >= plo - monitor.tol_x && envelope.1 <= phi + monitor.tol_x;
            monitor.check(k, "envelope-nesting", nested, || {
                format!("envelope {envelope:?} outside ({plo}, {phi})")
            });
            let idle_ok = (0..state.n()).all(|idx| {
                idx == pair.initiator.index()
                    || idx == pair.peer.index()
                    || state.estimates[idx].to_bits() == next.estimates[idx].to_bits()
            });
            monitor.check(k, "idle-bit-identity", idle_ok, || {
                "an idle node's estimate changed".to_owned()
            });
            match config.topology.has_edge(k, pair.edge()) {
                Ok(present) => monitor.check(k, "pair-in-topology", present, || {
                    format!("pair {pair} not in E({k})")
                }),
                Err(e) => monitor.record(k, "pair-in-topology", e.to_string()),
            }
        }

        rows.push(DiagnosticsRow {
            k,
            pair: Some((pair.initiator, pair.peer)),
            v,
            dv_observed: v - v_prev,
            dv_predicted,
            residual,
            envelope,
            gap_before,
            gap_after,
            skipped,
            tx_reals: tx_delta.reals,
            tx_functions: tx_delta.functions,
            tx_tokens: tx_delta.tokens,
            estimates: include_estimates.then(|| next.estimates.clone()),
        });

        state = next;
        v_prev = v;
        iters_run = k;
        if v <= stop_threshold {
            converged = true;
        }
    }

    let residual_final = conservation_residual(&state, specs)?;
    let summary = RunSummary {
        iters_run,
        converged,
        final_v: v_prev,
        v0,
        residual_final,
        tx_reals: state.tx.reals,
        tx_functions: state.tx.functions,
        tx_tokens: state.tx.tokens,
        wall_time: started.elapsed().as_secs_f64(),
    };
    Ok(RunArtifacts {
        summary,
        rows,
        history,
        violations: monitor.violations,
        x_star,
        final_state: state,
    })
}

/// Runs the experiment and writes the trace (JSON Lines) and summary
/// (single JSON document) files named in the config.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunSummary, HarnessError> {
    let artifacts = execute(config, &ExecOptions::default())?;
    if let Some(path) = &config.trace_path {
        write_trace(path, &artifacts.rows)?;
    }
    if let Some(path) = &config.summary_path {
        let json = serde_json::to_string_pretty(&artifacts.summary)
            .expect("summary serialization cannot fail");
        write_atomic(path, format!("{json}\n").as_bytes())?;
    }
    Ok(artifacts.summary)
}

/// Emits the pair schedule for the first `steps` iterations without
/// running an engine.
pub fn schedule_dump(
    config: &ExperimentConfig,
    steps: u64,
) -> Result<Vec<(u64, GossipPair)>, HarnessError> {
    let mut scheduler = Scheduler::new(config.scheduler_spec(), config.n_nodes())?;
    let mut out = Vec::with_capacity(steps as usize);
    for k in 1..=steps {
        out.push((k, scheduler.next_pair(k, &config.topology)?));
    }
    Ok(out)
}

fn write_trace(path: &Path, rows: &[DiagnosticsRow]) -> Result<(), HarnessError> {
    let mut buf = Vec::with_capacity(rows.len() * 160);
    for row in rows {
        serde_json::to_writer(&mut buf, row).expect("row serialization cannot fail");
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)
                .map_err(|e| HarnessError::io(dir.display().to_string(), e))?;
        }
    }
    let mut file =
        std::fs::File::create(path).map_err(|e| HarnessError::io(path.display().to_string(), e))?;
    file.write_all(bytes)
        .map_err(|e| HarnessError::io(path.display().to_string(), e))
}

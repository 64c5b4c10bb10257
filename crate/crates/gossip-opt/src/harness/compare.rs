//! Side-by-side cost comparison of the two engines.
//!
//! Runs the equalizing engine and the bisectioning engine (one run per
//! requested round count) on the *identical* gossip schedule — schedulers
//! are state-independent, so the same seed reproduces the same pair
//! sequence for every run — and reports iterations-to-threshold next to the
//! transmission bill. The structural trade shows up directly: equalizing
//! pays two reals per gossip plus one-time function descriptors, while
//! bisectioning pays `3+R`/`4+R` reals plus `R` tokens and never ships a
//! function.

use serde::Serialize;

use crate::engines::RoundsPolicy;

use super::config::{Algorithm, ExperimentConfig};
use super::run::{execute, ExecOptions};
use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub algorithm: String,
    pub rounds: Option<u32>,
    pub converged: bool,
    pub iters: u64,
    pub final_v: f64,
    pub tx_reals: u64,
    pub tx_functions: u64,
    pub tx_tokens: u64,
}

/// Runs `pe` plus `pb` at each fixed round count on the same schedule.
pub fn compare_algorithms(
    config: &ExperimentConfig,
    r_values: &[u32],
) -> Result<Vec<ComparisonRow>, HarnessError> {
    let opts = ExecOptions::default();
    let mut rows = Vec::with_capacity(r_values.len() + 1);

    let mut pe_config = config.clone();
    pe_config.algorithm = Algorithm::Pe;
    let art = execute(&pe_config, &opts)?;
    rows.push(ComparisonRow {
        algorithm: "pe".to_owned(),
        rounds: None,
        converged: art.summary.converged,
        iters: art.summary.iters_run,
        final_v: art.summary.final_v,
        tx_reals: art.summary.tx_reals,
        tx_functions: art.summary.tx_functions,
        tx_tokens: art.summary.tx_tokens,
    });

    for &r in r_values {
        if r == 0 {
            return Err(HarnessError::config("compare rounds must be at least 1"));
        }
        let mut pb_config = config.clone();
        pb_config.algorithm = Algorithm::Pb(RoundsPolicy::Fixed(r));
        let art = execute(&pb_config, &opts)?;
        rows.push(ComparisonRow {
            algorithm: "pb".to_owned(),
            rounds: Some(r),
            converged: art.summary.converged,
            iters: art.summary.iters_run,
            final_v: art.summary.final_v,
            tx_reals: art.summary.tx_reals,
            tx_functions: art.summary.tx_functions,
            tx_tokens: art.summary.tx_tokens,
        });
    }
    Ok(rows)
}

/// Plain-text table for terminal output.
pub fn render_comparison_table(rows: &[ComparisonRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<10} {:>6} {:>10} {:>10} {:>12} {:>12} {:>10} {:>12}\n",
        "algorithm", "R", "converged", "iters", "tx_reals", "tx_functions", "tx_tokens", "final_v"
    ));
    for row in rows {
        let r = row.rounds.map_or("-".to_owned(), |r| r.to_string());
        out.push_str(&format!(
            "{:<10} {:>6} {:>10} {:>10} {:>12} {:>12} {:>10} {:>12.3e}\n",
            row.algorithm,
            r,
            row.converged,
            row.iters,
            row.tx_reals,
            row.tx_functions,
            row.tx_tokens,
            row.final_v
        ));
    }
    out
}

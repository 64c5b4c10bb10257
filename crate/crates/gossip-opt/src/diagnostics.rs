//! Convergence diagnostics.
//!
//! The common Lyapunov function for both engines is built from first-order
//! convexity surpluses (Bregman gaps):
//!
//! ```text
//! V(x̂) = Σ_i [ f_i(x*) − f_i(x̂_i) − f_i′(x̂_i)·(x* − x̂_i) ]
//! ```
//!
//! with `x*` the network optimum from the independent
//! [`solve_global_optimum`](crate::rootfind::solve_global_optimum) oracle.
//! `V ≥ 0`, with zero exactly at consensus on `x*`, and every gossip can
//! only decrease it. For equalizing steps the exact drop has a closed form
//! over the gossiping pair, which [`predicted_drop_pe`] computes so the
//! harness can assert observed-versus-predicted agreement at every step.
//!
//! Diagnostics are pure functions over state snapshots; nothing here feeds
//! back into the engines, which keeps the engines free of global knowledge.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engines::ConsensusState;
use crate::network::NodeId;
use crate::objective::{ObjectiveError, ObjectiveSpec};
use crate::rng::SplitMix64;
use crate::rootfind::{solve_equalized, RootfindError, DEFAULT_MAX_ITER};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagnosticsError {
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Rootfind(#[from] RootfindError),
    #[error("state has {estimates} estimates but {specs} objective specs")]
    SpecMismatch { estimates: usize, specs: usize },
}

fn check_lengths(state: &ConsensusState, specs: &[ObjectiveSpec]) -> Result<(), DiagnosticsError> {
    if state.n() != specs.len() {
        return Err(DiagnosticsError::SpecMismatch {
            estimates: state.n(),
            specs: specs.len(),
        });
    }
    Ok(())
}

/// First-order convexity surplus `f(to) − f(from) − f′(from)·(to − from)`.
/// Nonnegative for convex `f`, zero iff `from == to`.
pub fn bregman_gap(f: &ObjectiveSpec, from: f64, to: f64) -> Result<f64, ObjectiveError> {
    let f_to = f.eval(to)?;
    let f_from = f.eval(from)?;
    let d_from = f.deriv(from)?;
    Ok(f_to - f_from - d_from * (to - from))
}

/// The Lyapunov value `V` of a state, given the network optimum `x*`.
pub fn lyapunov(
    state: &ConsensusState,
    specs: &[ObjectiveSpec],
    x_star: f64,
) -> Result<f64, DiagnosticsError> {
    check_lengths(state, specs)?;
    let mut v = 0.0;
    for (f, &x) in specs.iter().zip(&state.estimates) {
        v += bregman_gap(f, x, x_star)?;
    }
    Ok(v)
}

/// The exact drop an equalizing step causes, from the closed form
/// `ΔV = −Σ_{i∈pair} [f_i(x̂_i(k)) − f_i(x̂_i(k−1)) − f_i′(x̂_i(k−1))·Δx̂_i]`.
/// Independent of `x*`.
pub fn predicted_drop_pe(
    before: &ConsensusState,
    pair: (NodeId, NodeId),
    after: &ConsensusState,
    specs: &[ObjectiveSpec],
) -> Result<f64, DiagnosticsError> {
    check_lengths(before, specs)?;
    check_lengths(after, specs)?;
    let mut drop = 0.0;
    for node in [pair.0, pair.1] {
        let f = &specs[node.index()];
        drop -= bregman_gap(f, before.estimate(node), after.estimate(node))?;
    }
    Ok(drop)
}

/// The conserved quantity `Σ_i f_i′(x̂_i)`; zero at initialization and
/// invariant under both engines up to root-find tolerance.
pub fn conservation_residual(
    state: &ConsensusState,
    specs: &[ObjectiveSpec],
) -> Result<f64, DiagnosticsError> {
    check_lengths(state, specs)?;
    let mut sum = 0.0;
    for (f, &x) in specs.iter().zip(&state.estimates) {
        sum += f.deriv(x)?;
    }
    Ok(sum)
}

/// Per-step conservation drift allowance `2·L_max·tol_x`, where `L_max` is
/// the largest sampled slope of any `f_i′` over `[a, b]` (129-point grid).
/// A degenerate envelope is widened to `1e-6·(1+|a|)` on each side, clipped
/// to the common domain.
pub fn conservation_drift_budget(
    specs: &[ObjectiveSpec],
    envelope: (f64, f64),
    tol_x: f64,
) -> Result<f64, DiagnosticsError> {
    let (mut a, mut b) = envelope;
    if a >= b {
        let pad = 1e-6 * (1.0 + a.abs());
        let mut dom_lo = f64::NEG_INFINITY;
        let mut dom_hi = f64::INFINITY;
        for spec in specs {
            dom_lo = dom_lo.max(spec.domain().lo);
            dom_hi = dom_hi.min(spec.domain().hi);
        }
        a = (a - pad).max(dom_lo + pad.min(1e-9));
        b = (b + pad).min(dom_hi - pad.min(1e-9));
    }
    const GRID: usize = 129;
    let h = (b - a) / (GRID - 1) as f64;
    let mut l_max = 0.0f64;
    for spec in specs {
        let mut prev = spec.deriv(a)?;
        for step in 1..GRID {
            let x = if step == GRID - 1 {
                b
            } else {
                a + h * step as f64
            };
            let cur = spec.deriv(x)?;
            l_max = l_max.max((cur - prev).abs() / h);
            prev = cur;
        }
    }
    Ok(2.0 * l_max * tol_x)
}

/// Result of the constructive Bregman-gap bound check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaBound {
    /// `β = 1 + 2·max_j |f_j′(b)|`.
    pub beta: f64,
    /// Whether `f_i(y) − f_i(x) − f_i′(x)(y−x) ≤ β·|y−x|` held on every
    /// sampled pair for every spec.
    pub holds: bool,
}

/// Checks the linear Bregman-gap bound with the constructive constant
/// `β = 1 + 2·max_j |f_j′(b)|` on `n_samples` uniformly sampled pairs
/// `(x, y) ∈ [a, b]²`.
pub fn beta_bound_check(
    specs: &[ObjectiveSpec],
    interval: (f64, f64),
    n_samples: usize,
    seed: u64,
) -> Result<BetaBound, DiagnosticsError> {
    let (a, b) = interval;
    for spec in specs {
        // The closed interval must sit strictly inside every open domain.
        spec.deriv(a)?;
        spec.deriv(b)?;
    }
    let mut beta = f64::NEG_INFINITY;
    for spec in specs {
        beta = beta.max(1.0 + 2.0 * spec.deriv_raw(b).abs());
    }
    let mut rng = SplitMix64::new(seed);
    let mut holds = true;
    for _ in 0..n_samples {
        let x = a + (b - a) * rng.next_f64();
        let y = a + (b - a) * rng.next_f64();
        for spec in specs {
            let gap = bregman_gap(spec, x, y)?;
            if gap > beta * (y - x).abs() {
                holds = false;
            }
        }
    }
    Ok(BetaBound { beta, holds })
}

/// Outcome of probing one target gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProbeOutcome {
    /// The pair's Lyapunov contribution at this gap, relative to its value
    /// at gap zero (the equalized point).
    Value(f64),
    /// No conservation- and order-preserving pair exists at this gap inside
    /// the probe envelope.
    NotRepresentable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapProbe {
    pub gap: f64,
    pub outcome: ProbeOutcome,
}

/// Samples the pair's Lyapunov contribution as a function of the residual
/// gap between the two estimates, holding the conserved derivative sum
/// fixed and preserving order.
///
/// For each target gap `g ∈ [0, |xj − xi|]` there is a unique such pair
/// `(t, t+g)` inside the original envelope; its contribution is evaluated
/// against the equalized point as reference, so gap 0 reports exactly 0 and
/// the sequence must increase strictly with `g`.
pub fn approach_monotonicity_probe(
    fi: &ObjectiveSpec,
    fj: &ObjectiveSpec,
    xi: f64,
    xj: f64,
    gaps: &[f64],
    tol_x: f64,
) -> Result<Vec<GapProbe>, DiagnosticsError> {
    for spec in [fi, fj] {
        spec.deriv(xi)?;
        spec.deriv(xj)?;
    }
    // Orient so that L holds the lower estimate.
    let ((f_lo, x_lo), (f_hi, x_hi)) = if xi <= xj {
        ((fi, xi), (fj, xj))
    } else {
        ((fj, xj), (fi, xi))
    };
    let gap0 = x_hi - x_lo;
    let target = f_lo.deriv_raw(x_lo) + f_hi.deriv_raw(x_hi);
    let z = solve_equalized(fi, fj, xi, xj, tol_x)?;

    let mut out = Vec::with_capacity(gaps.len());
    for &g in gaps {
        if !(0.0..=gap0).contains(&g) {
            out.push(GapProbe {
                gap: g,
                outcome: ProbeOutcome::NotRepresentable,
            });
            continue;
        }
        // Unique t in [x_lo, x_hi − g] with f_L′(t) + f_U′(t+g) = target.
        let solved = crate::rootfind::bisect_increasing_on(
            |t| f_lo.deriv_raw(t) + f_hi.deriv_raw(t + g),
            target,
            x_lo,
            x_hi - g,
            tol_x,
            DEFAULT_MAX_ITER,
        );
        let t = match solved {
            Ok(t) => t,
            Err(RootfindError::BracketInvalid { .. }) => {
                out.push(GapProbe {
                    gap: g,
                    outcome: ProbeOutcome::NotRepresentable,
                });
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let value = match (bregman_gap(f_lo, t, z), bregman_gap(f_hi, t + g, z)) {
            (Ok(lo_term), Ok(hi_term)) => lo_term + hi_term,
            (Err(ObjectiveError::DomainViolation { .. }), _)
            | (_, Err(ObjectiveError::DomainViolation { .. })) => {
                out.push(GapProbe {
                    gap: g,
                    outcome: ProbeOutcome::NotRepresentable,
                });
                continue;
            }
            (Err(e), _) | (_, Err(e)) => return Err(e.into()),
        };
        out.push(GapProbe {
            gap: g,
            outcome: ProbeOutcome::Value(value),
        });
    }
    Ok(out)
}

/// One trace row per gossip iteration.
///
/// Serialized as a single JSON object per line in the trace stream; the
/// field names are a stable contract. `pair` is `[initiator, peer]`,
/// `dv_predicted` is the equalizing-engine closed form (null for
/// bisectioning), the `tx_*` fields are this step's deltas, and `estimates`
/// is present only in runs that opt in (small networks).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub k: u64,
    pub pair: Option<(NodeId, NodeId)>,
    pub v: f64,
    pub dv_observed: f64,
    pub dv_predicted: Option<f64>,
    pub residual: f64,
    pub envelope: (f64, f64),
    pub gap_before: f64,
    pub gap_after: f64,
    pub skipped: bool,
    pub tx_reals: u64,
    pub tx_functions: u64,
    pub tx_tokens: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimates: Option<Vec<f64>>,
}

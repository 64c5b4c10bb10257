//! The two gossip iteration engines.
//!
//! Both engines drive the same switched dynamical system: at iteration `k`
//! exactly one adjacent pair updates its estimates while every other node
//! stays idle, and every update preserves the conserved quantity
//! `Σ_i f_i′(x̂_i)` (up to root-find tolerance, which is measured rather
//! than hidden).
//!
//! * **Pairwise equalizing** ([`pe_step`]): the pair jointly moves to the
//!   unique `z` with `f_i′(z) + f_j′(z)` equal to the pre-gossip derivative
//!   sum, computed by one node that must therefore know both functions. The
//!   first such gossip on a pair ships one function descriptor; afterwards
//!   the pair gossips with two real-number transmissions.
//!
//! * **Pairwise bisectioning** ([`pb_step`]): the pair only *approaches*
//!   the equalized point, never sharing functions. Both nodes keep a shared
//!   bracket around the equalized value, shrink it with `R` bisection
//!   rounds driven by derivative-difference messages and LEFT/RIGHT tokens,
//!   then one node clamps to a bracket end while the other inverts its own
//!   derivative to restore the conserved sum exactly. Per iteration this
//!   costs `3+R` or `4+R` real transmissions (depending on which side
//!   inverts) plus `R` binary tokens.
//!
//! A gossip whose estimate gap is at or below the configured skip threshold
//! is recorded as skipped and leaves the estimates untouched; the Lyapunov
//! drop would be zero anyway.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{GossipPair, NodeId};
use crate::objective::{ObjectiveError, ObjectiveSpec};
use crate::rootfind::{
    invert_derivative, solve_equalized, Bracket, RootfindError, DEFAULT_MAX_ITER,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("need at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("gossip pair ({i}, {j}) invalid for {n} nodes")]
    InvalidPair { i: u32, j: u32, n: usize },
    #[error("state has {estimates} estimates but {specs} objective specs")]
    SpecMismatch { estimates: usize, specs: usize },
    #[error("bisection rounds must be at least 1")]
    InvalidRounds,
    #[error(transparent)]
    Rootfind(#[from] RootfindError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

/// Cumulative transmission counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxCounters {
    /// Real-number payloads actually transmitted between the pair.
    pub reals: u64,
    /// Objective descriptors shipped (pairwise equalizing only).
    pub functions: u64,
    /// Binary LEFT/RIGHT tokens (pairwise bisectioning only).
    pub tokens: u64,
}

/// The full network state after `k` gossip iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusState {
    /// Estimate `x̂_i` per node, `estimates[i-1]` for node `i`.
    pub estimates: Vec<f64>,
    /// Node ids whose objective each node has learned; always contains self.
    pub knowledge: Vec<BTreeSet<NodeId>>,
    /// Iterations applied so far.
    pub k: u64,
    pub tx: TxCounters,
}

impl ConsensusState {
    pub fn n(&self) -> usize {
        self.estimates.len()
    }

    pub fn estimate(&self, node: NodeId) -> f64 {
        self.estimates[node.index()]
    }

    /// `[min_i x̂_i, max_i x̂_i]`; never grows along a trajectory.
    pub fn envelope(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &x in &self.estimates {
            lo = lo.min(x);
            hi = hi.max(x);
        }
        (lo, hi)
    }

    pub fn gap(&self, pair: GossipPair) -> f64 {
        (self.estimate(pair.initiator) - self.estimate(pair.peer)).abs()
    }

    fn check_pair(&self, pair: GossipPair) -> Result<(), EngineError> {
        let n = self.n();
        let (i, j) = (pair.initiator.0, pair.peer.0);
        if i == 0 || j == 0 || i as usize > n || j as usize > n || i == j {
            return Err(EngineError::InvalidPair { i, j, n });
        }
        Ok(())
    }
}

/// Per-step numeric controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    /// Width tolerance for the inner root-find solves.
    pub tol_x: f64,
    /// Gossips with `|x̂_i − x̂_j| ≤ skip_gap` are skipped; negative
    /// disables skipping entirely.
    pub skip_gap: f64,
}

impl Default for StepParams {
    fn default() -> Self {
        Self {
            tol_x: crate::rootfind::DEFAULT_TOL_X,
            skip_gap: 1e-14,
        }
    }
}

/// Initializes every node at its own minimizer, which puts the conserved
/// derivative sum at zero before the first gossip.
pub fn init(specs: &[ObjectiveSpec]) -> Result<ConsensusState, EngineError> {
    if specs.len() < 2 {
        return Err(EngineError::TooFewNodes(specs.len()));
    }
    let estimates: Vec<f64> = specs.iter().map(ObjectiveSpec::minimizer).collect();
    let knowledge = (1..=specs.len() as u32)
        .map(|i| BTreeSet::from([NodeId(i)]))
        .collect();
    Ok(ConsensusState {
        estimates,
        knowledge,
        k: 0,
        tx: TxCounters::default(),
    })
}

/// What a pairwise-equalizing iteration did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PeStepOutcome {
    Applied {
        /// The equalized value both nodes adopted.
        equalized: f64,
        /// The node that ran the root-find (labelled `b` in the exchange).
        computer: NodeId,
        /// Whether this gossip had to ship a function descriptor first.
        shared_function: bool,
    },
    /// Gap at or below the skip threshold; estimates untouched.
    Skipped { gap: f64 },
}

/// One pairwise-equalizing iteration on `pair`.
///
/// Role choice: the node that already knows both functions computes, so a
/// pair that has gossiped before never re-ships a descriptor; on first
/// contact the peer computes and the initiator's function is shipped to it.
pub fn pe_step(
    state: &ConsensusState,
    specs: &[ObjectiveSpec],
    pair: GossipPair,
    params: &StepParams,
) -> Result<(ConsensusState, PeStepOutcome), EngineError> {
    state.check_pair(pair)?;
    if specs.len() != state.n() {
        return Err(EngineError::SpecMismatch {
            estimates: state.n(),
            specs: specs.len(),
        });
    }
    let (i, j) = (pair.initiator, pair.peer);
    let (xi, xj) = (state.estimate(i), state.estimate(j));

    let mut next = state.clone();
    next.k += 1;

    let gap = (xi - xj).abs();
    if gap <= params.skip_gap {
        return Ok((next, PeStepOutcome::Skipped { gap }));
    }

    let i_knows = state.knowledge[i.index()].contains(&j);
    let j_knows = state.knowledge[j.index()].contains(&i);
    let (a, b) = match (i_knows, j_knows) {
        (true, false) => (j, i),
        _ => (i, j),
    };
    let shared_function = !next.knowledge[b.index()].contains(&a);
    if shared_function {
        next.knowledge[b.index()].insert(a);
        next.tx.functions += 1;
    }

    let z = solve_equalized(&specs[i.index()], &specs[j.index()], xi, xj, params.tol_x)?;
    next.estimates[i.index()] = z;
    next.estimates[j.index()] = z;
    next.tx.reals += 2;
    Ok((
        next,
        PeStepOutcome::Applied {
            equalized: z,
            computer: b,
            shared_function,
        },
    ))
}

/// LEFT keeps the lower half of the bracket, RIGHT the upper half.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BisectToken {
    Left,
    Right,
}

/// Which side performed the derivative inversion in the final step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PbBranch {
    /// The initiator inverted; `3+R` real transmissions.
    IInverts,
    /// The peer inverted after one extra message; `4+R` real transmissions.
    JInverts,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", content = "value", tag = "kind")]
pub enum PbPayload {
    Estimate(f64),
    DerivativeDelta(f64),
    Token(BisectToken),
    /// A node's closing assignment to its own estimate; logged for trace
    /// completeness, not transmitted.
    FinalEstimate(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PbMessage {
    pub from: NodeId,
    pub to: NodeId,
    pub payload: PbPayload,
}

/// Ordered log of one pairwise-bisectioning iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PbTranscript {
    pub initiator: NodeId,
    pub peer: NodeId,
    pub rounds: u32,
    pub branch: PbBranch,
    pub messages: Vec<PbMessage>,
    pub gap_before: f64,
    pub gap_after: f64,
}

impl PbTranscript {
    /// Real-valued payloads actually transmitted (`from != to`); always
    /// `3 + rounds` or `4 + rounds`.
    pub fn real_message_count(&self) -> u64 {
        self.messages
            .iter()
            .filter(|m| {
                m.from != m.to
                    && matches!(
                        m.payload,
                        PbPayload::Estimate(_)
                            | PbPayload::DerivativeDelta(_)
                            | PbPayload::FinalEstimate(_)
                    )
            })
            .count() as u64
    }

    pub fn token_count(&self) -> u64 {
        self.messages
            .iter()
            .filter(|m| matches!(m.payload, PbPayload::Token(_)))
            .count() as u64
    }
}

/// What a pairwise-bisectioning iteration did.
#[derive(Debug, Clone, PartialEq)]
pub enum PbStepOutcome {
    Applied(Box<PbTranscript>),
    Skipped { gap: f64 },
}

/// One pairwise-bisectioning iteration on `pair` with `rounds ≥ 1`
/// bisection rounds.
///
/// The protocol, with `i` the initiator and `j` the peer:
/// 1. `i` and `j` exchange estimates and both set the bracket
///    `[a, b] = [min(x̂_i, x̂_j), max(x̂_i, x̂_j)]`.
/// 2. `R` times: `j` sends `f_j′((a+b)/2) − f_j′(x̂_j)`; `i` adds its own
///    difference at the midpoint and keeps the lower half (LEFT) when the
///    sum is `≥ 0`, the upper half (RIGHT) otherwise, echoing the token.
/// 3. `j` sends `f_j′(c_j) − f_j′(x̂_j)` where `c_j` is the bracket end on
///    its side (`a` if `x̂_j ≤ a`, else `b`). `i` forms the same quantity
///    for itself and tests `(Δ_j + Δ_i)·(x̂_i − (a+b)/2) ≥ 0`: if so `i`
///    inverts `f_i′` to absorb `j`'s move to `c_j`; otherwise `i` sends its
///    own difference, clamps to `c_i`, and `j` inverts.
///
/// Both finals land inside the post-bisection bracket, so order is
/// preserved and the gap contracts by `2^−R` (plus root-find tolerance).
pub fn pb_step(
    state: &ConsensusState,
    specs: &[ObjectiveSpec],
    pair: GossipPair,
    rounds: u32,
    params: &StepParams,
) -> Result<(ConsensusState, PbStepOutcome), EngineError> {
    state.check_pair(pair)?;
    if specs.len() != state.n() {
        return Err(EngineError::SpecMismatch {
            estimates: state.n(),
            specs: specs.len(),
        });
    }
    if rounds == 0 {
        return Err(EngineError::InvalidRounds);
    }
    let (i, j) = (pair.initiator, pair.peer);
    let (xi, xj) = (state.estimate(i), state.estimate(j));
    let fi = &specs[i.index()];
    let fj = &specs[j.index()];

    let mut next = state.clone();
    next.k += 1;

    let gap_before = (xi - xj).abs();
    if gap_before <= params.skip_gap {
        return Ok((next, PbStepOutcome::Skipped { gap: gap_before }));
    }

    // The whole bracket is evaluated by both derivatives.
    for spec in [fi, fj] {
        spec.deriv(xi)?;
        spec.deriv(xj)?;
    }
    let dxi = fi.deriv_raw(xi);
    let dxj = fj.deriv_raw(xj);

    let mut messages = Vec::with_capacity(2 * rounds as usize + 5);
    messages.push(PbMessage {
        from: i,
        to: j,
        payload: PbPayload::Estimate(xi),
    });
    messages.push(PbMessage {
        from: j,
        to: i,
        payload: PbPayload::Estimate(xj),
    });

    let mut a = xi.min(xj);
    let mut b = xi.max(xj);
    for _ in 0..rounds {
        let mid = 0.5 * (a + b);
        let delta_j = fj.deriv_raw(mid) - dxj;
        messages.push(PbMessage {
            from: j,
            to: i,
            payload: PbPayload::DerivativeDelta(delta_j),
        });
        if delta_j + fi.deriv_raw(mid) - dxi >= 0.0 {
            b = mid;
            messages.push(PbMessage {
                from: i,
                to: j,
                payload: PbPayload::Token(BisectToken::Left),
            });
        } else {
            a = mid;
            messages.push(PbMessage {
                from: i,
                to: j,
                payload: PbPayload::Token(BisectToken::Right),
            });
        }
    }

    // Each node's clamp point is the bracket end on its own side; when the
    // bracket has collapsed onto both cases, the lower end is the pick.
    let c_j = if xj <= a { a } else { b };
    let c_i = if xi <= a { a } else { b };
    let delta_cj = fj.deriv_raw(c_j) - dxj;
    let delta_ci = fi.deriv_raw(c_i) - dxi;
    messages.push(PbMessage {
        from: j,
        to: i,
        payload: PbPayload::DerivativeDelta(delta_cj),
    });

    let mid = 0.5 * (a + b);
    let branch = if (delta_cj + delta_ci) * (xi - mid) >= 0.0 {
        let new_i = invert_within(fi, dxi - delta_cj, a, b, params.tol_x)?;
        next.estimates[i.index()] = new_i;
        next.estimates[j.index()] = c_j;
        PbBranch::IInverts
    } else {
        messages.push(PbMessage {
            from: i,
            to: j,
            payload: PbPayload::DerivativeDelta(delta_ci),
        });
        let new_j = invert_within(fj, dxj - delta_ci, a, b, params.tol_x)?;
        next.estimates[i.index()] = c_i;
        next.estimates[j.index()] = new_j;
        PbBranch::JInverts
    };

    let (final_i, final_j) = (next.estimates[i.index()], next.estimates[j.index()]);
    messages.push(PbMessage {
        from: i,
        to: i,
        payload: PbPayload::FinalEstimate(final_i),
    });
    messages.push(PbMessage {
        from: j,
        to: j,
        payload: PbPayload::FinalEstimate(final_j),
    });

    let transcript = PbTranscript {
        initiator: i,
        peer: j,
        rounds,
        branch,
        gap_before,
        gap_after: (final_i - final_j).abs(),
        messages,
    };
    next.tx.reals += transcript.real_message_count();
    next.tx.tokens += transcript.token_count();
    Ok((next, PbStepOutcome::Applied(Box::new(transcript))))
}

/// Inversion restricted to `[a, b]`. In exact arithmetic the branch test
/// guarantees the target lies in `[f′(a), f′(b)]`; the clamp absorbs
/// rounding at the ends, while decreasing end values (a non-convex spec)
/// still surface as `BracketInvalid`.
fn invert_within(
    f: &ObjectiveSpec,
    target: f64,
    a: f64,
    b: f64,
    tol_x: f64,
) -> Result<f64, EngineError> {
    if a == b {
        return Ok(a);
    }
    let d_a = f.deriv(a)?;
    let d_b = f.deriv(b)?;
    if d_a > d_b {
        return Err(EngineError::Rootfind(RootfindError::BracketInvalid {
            lo: a,
            hi: b,
            r_lo: d_a - target,
            r_hi: d_b - target,
        }));
    }
    let bracket = Bracket::new(a, b, tol_x, DEFAULT_MAX_ITER)?;
    Ok(invert_derivative(f, target.clamp(d_a, d_b), &bracket)?)
}

/// How many bisection rounds an iteration gets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RoundsPolicy {
    Fixed(u32),
    /// Enough rounds that the post-iteration gap is at most `δ`:
    /// `max(1, ceil(log₂(gap/δ)))`.
    Adaptive(f64),
}

/// Resolves the policy against the pair's current gap.
pub fn select_rounds(policy: RoundsPolicy, gap: f64) -> u32 {
    match policy {
        RoundsPolicy::Fixed(r) => r.max(1),
        RoundsPolicy::Adaptive(delta) => {
            // log-space keeps the ratio finite for any positive inputs.
            let r = (gap.log2() - delta.log2()).ceil();
            if r.is_nan() || r < 1.0 {
                1
            } else if r >= u32::MAX as f64 {
                u32::MAX
            } else {
                r as u32
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::ObjectiveKind;

    fn quad(y: f64) -> ObjectiveSpec {
        ObjectiveSpec::new(ObjectiveKind::Quadratic { y, c: 0.0 }).unwrap()
    }

    fn wquad(w: f64, y: f64) -> ObjectiveSpec {
        ObjectiveSpec::new(ObjectiveKind::WeightedQuadratic { w, y }).unwrap()
    }

    fn pair(i: u32, j: u32) -> GossipPair {
        GossipPair::new(NodeId(i), NodeId(j)).unwrap()
    }

    fn residual(state: &ConsensusState, specs: &[ObjectiveSpec]) -> f64 {
        specs
            .iter()
            .zip(&state.estimates)
            .map(|(f, &x)| f.deriv(x).unwrap())
            .sum()
    }

    #[test]
    fn init_puts_every_node_at_its_minimizer() {
        let specs = [quad(1.0), quad(2.0), quad(3.0)];
        let state = init(&specs).unwrap();
        assert_eq!(state.estimates, vec![1.0, 2.0, 3.0]);
        assert_eq!(state.k, 0);
        assert_eq!(state.tx, TxCounters::default());
        for (idx, set) in state.knowledge.iter().enumerate() {
            assert!(set.contains(&NodeId(idx as u32 + 1)));
            assert_eq!(set.len(), 1);
        }
        assert!(residual(&state, &specs).abs() <= 1e-10);

        let exp = ObjectiveSpec::new(ObjectiveKind::ExpPlusLinear { s: 1.0, m: 3.0 }).unwrap();
        let state = init(&[exp, exp]).unwrap();
        let ln3 = 1.098_612_288_668_109_8;
        assert!((state.estimates[0] - ln3).abs() <= 1e-12);
        assert!((state.estimates[1] - ln3).abs() <= 1e-12);
    }

    #[test]
    fn init_needs_two_nodes() {
        assert!(matches!(
            init(&[quad(0.0)]),
            Err(EngineError::TooFewNodes(1))
        ));
    }

    #[test]
    fn pe_step_averages_quadratics() {
        let specs = [quad(1.0), quad(3.0)];
        let state = init(&specs).unwrap();
        let (next, outcome) = pe_step(&state, &specs, pair(1, 2), &StepParams::default()).unwrap();
        assert_eq!(next.estimates, vec![2.0, 2.0]);
        assert_eq!(next.k, 1);
        assert_eq!(next.tx.reals, 2);
        match outcome {
            PeStepOutcome::Applied {
                equalized,
                shared_function,
                ..
            } => {
                assert_eq!(equalized, 2.0);
                assert!(shared_function);
            }
            other => panic!("expected applied step, got {other:?}"),
        }
    }

    #[test]
    fn pe_step_weighted_mean_oracle() {
        // Closed-form weighted mean: (1·0 + 3·4)/4 = 3.
        let specs = [wquad(1.0, 0.0), wquad(3.0, 4.0)];
        let state = init(&specs).unwrap();
        let (next, _) = pe_step(&state, &specs, pair(1, 2), &StepParams::default()).unwrap();
        assert!((next.estimates[0] - 3.0).abs() <= 1e-12);
        assert_eq!(next.estimates[0], next.estimates[1]);
    }

    #[test]
    fn pe_step_skips_degenerate_gap() {
        let specs = [quad(5.0), quad(5.0)];
        let state = init(&specs).unwrap();
        let (next, outcome) = pe_step(&state, &specs, pair(1, 2), &StepParams::default()).unwrap();
        assert!(matches!(outcome, PeStepOutcome::Skipped { gap } if gap == 0.0));
        assert_eq!(next.estimates, state.estimates);
        assert_eq!(next.k, 1);
        assert_eq!(next.tx.reals, 0);
        assert_eq!(next.tx.functions, 0);
    }

    #[test]
    fn pe_function_sharing_happens_once_per_pair() {
        let specs = [quad(0.0), quad(4.0)];
        let state = init(&specs).unwrap();
        let params = StepParams {
            skip_gap: -1.0,
            ..StepParams::default()
        };
        let (s1, o1) = pe_step(&state, &specs, pair(1, 2), &params).unwrap();
        assert_eq!(s1.tx.functions, 1);
        assert!(s1.knowledge[1].contains(&NodeId(1)));
        // Same pair again, either orientation: the knowing node computes.
        let (s2, o2) = pe_step(&s1, &specs, pair(2, 1), &params).unwrap();
        assert_eq!(s2.tx.functions, 1);
        match (o1, o2) {
            (
                PeStepOutcome::Applied {
                    computer: c1,
                    shared_function: t1,
                    ..
                },
                PeStepOutcome::Applied {
                    computer: c2,
                    shared_function: t2,
                    ..
                },
            ) => {
                assert_eq!(c1, NodeId(2));
                assert!(t1);
                assert_eq!(c2, NodeId(2));
                assert!(!t2);
            }
            other => panic!("expected applied steps, got {other:?}"),
        }
    }

    #[test]
    fn pe_idle_nodes_bit_identical() {
        let specs = [quad(0.1), quad(2.7), quad(-3.3), quad(9.9)];
        let state = init(&specs).unwrap();
        let (next, _) = pe_step(&state, &specs, pair(2, 3), &StepParams::default()).unwrap();
        assert_eq!(next.estimates[0].to_bits(), state.estimates[0].to_bits());
        assert_eq!(next.estimates[3].to_bits(), state.estimates[3].to_bits());
    }

    #[test]
    fn pb_step_hand_traced_quadratic_example() {
        // f1 = ½x², f2 = ½(x−4)², estimates (0, 4), R = 1: the single round
        // lands LEFT on bracket [0, 2], node 2 clamps to 2, node 1 inverts
        // f1′ to 2; final (2, 2).
        let specs = [quad(0.0), quad(4.0)];
        let state = init(&specs).unwrap();
        let (next, outcome) =
            pb_step(&state, &specs, pair(1, 2), 1, &StepParams::default()).unwrap();
        assert_eq!(next.estimates, vec![2.0, 2.0]);
        let t = match outcome {
            PbStepOutcome::Applied(t) => t,
            other => panic!("expected applied step, got {other:?}"),
        };
        assert_eq!(t.branch, PbBranch::IInverts);
        assert_eq!(t.real_message_count(), 4); // 3 + R with R = 1
        assert_eq!(t.token_count(), 1);
        assert_eq!(t.gap_before, 4.0);
        assert_eq!(t.gap_after, 0.0);
        assert_eq!(next.tx.reals, 4);
        assert_eq!(next.tx.tokens, 1);
        assert_eq!(next.tx.functions, 0);
        // Conservation held exactly on this dyadic instance.
        assert_eq!(residual(&next, &specs), 0.0);
    }

    #[test]
    fn pb_equal_estimates_with_skip_disabled() {
        let specs = [quad(3.0), quad(3.0)];
        let state = init(&specs).unwrap();
        let params = StepParams {
            skip_gap: -1.0,
            ..StepParams::default()
        };
        for rounds in [1, 3, 7] {
            let (next, outcome) = pb_step(&state, &specs, pair(1, 2), rounds, &params).unwrap();
            assert_eq!(next.estimates, vec![3.0, 3.0]);
            match outcome {
                PbStepOutcome::Applied(t) => assert_eq!(t.gap_after, 0.0),
                other => panic!("expected applied step, got {other:?}"),
            }
        }
    }

    #[test]
    fn pb_message_counts_across_instances() {
        use crate::rng::SplitMix64;
        let specs = [
            quad(0.0),
            wquad(2.0, 4.0),
            ObjectiveSpec::new(ObjectiveKind::ExpPlusLinear { s: 1.0, m: 4.0 }).unwrap(),
        ];
        let mut rng = SplitMix64::new(17);
        let mut state = init(&specs).unwrap();
        let params = StepParams::default();
        let mut seen_j_inverts = false;
        for step in 0..200 {
            let i = rng.next_index(3) as u32 + 1;
            let mut j = rng.next_index(3) as u32 + 1;
            if i == j {
                j = if j == 3 { 1 } else { j + 1 };
            }
            let rounds = rng.next_index(6) as u32 + 1;
            let (next, outcome) = pb_step(&state, &specs, pair(i, j), rounds, &params).unwrap();
            if let PbStepOutcome::Applied(t) = outcome {
                let reals = t.real_message_count();
                assert!(
                    reals == u64::from(3 + rounds) || reals == u64::from(4 + rounds),
                    "step {step}: {reals} reals for R={rounds}"
                );
                assert_eq!(t.token_count(), u64::from(rounds));
                seen_j_inverts |= t.branch == PbBranch::JInverts;
                assert!(
                    t.gap_after
                        <= t.gap_before / f64::powi(2.0, rounds as i32) + 4.0 * params.tol_x
                );
            }
            assert_eq!(next.tx.functions, 0);
            state = next;
        }
        assert!(
            seen_j_inverts,
            "both branches should occur over 200 random steps"
        );
    }

    #[test]
    fn pb_preserves_order_and_envelope() {
        use crate::rng::SplitMix64;
        let specs = [quad(-1.0), quad(5.0)];
        let mut rng = SplitMix64::new(23);
        let params = StepParams::default();
        for _ in 0..200 {
            let mut state = init(&specs).unwrap();
            state.estimates[0] = -1.0 + 6.0 * rng.next_f64();
            state.estimates[1] = -1.0 + 6.0 * rng.next_f64();
            let (lo, hi) = state.envelope();
            let ordered = state.estimates[0] <= state.estimates[1];
            let rounds = rng.next_index(5) as u32 + 1;
            let p = if rng.next_bool() {
                pair(1, 2)
            } else {
                pair(2, 1)
            };
            let (next, _) = pb_step(&state, &specs, p, rounds, &params).unwrap();
            let (nlo, nhi) = next.envelope();
            assert!(nlo >= lo - params.tol_x && nhi <= hi + params.tol_x);
            if ordered {
                assert!(next.estimates[0] <= next.estimates[1] + 4.0 * params.tol_x);
            } else {
                assert!(next.estimates[1] <= next.estimates[0] + 4.0 * params.tol_x);
            }
        }
    }

    #[test]
    fn pb_approaches_pe_result_as_rounds_grow() {
        let specs = [
            ObjectiveSpec::new(ObjectiveKind::ExpPlusLinear { s: 1.0, m: 1.0 }).unwrap(),
            quad(2.0),
        ];
        let mut state = init(&specs).unwrap();
        state.estimates = vec![0.0, 2.0];
        let params = StepParams::default();
        let z = solve_equalized(&specs[0], &specs[1], 0.0, 2.0, params.tol_x).unwrap();
        for rounds in [1u32, 2, 4, 8, 16, 32] {
            let (next, _) = pb_step(&state, &specs, pair(1, 2), rounds, &params).unwrap();
            let bound = 2.0f64.powi(-(rounds as i32)) * 2.0 + 8.0 * params.tol_x;
            for &x in &next.estimates {
                assert!((x - z).abs() <= bound, "R={rounds}: |{x} − {z}| > {bound}");
            }
        }
    }

    #[test]
    fn pb_conservation_within_tolerance() {
        use crate::rng::SplitMix64;
        let specs = [
            quad(1.0),
            ObjectiveSpec::new(ObjectiveKind::QuarticPlusQuadratic {
                a: 1.0,
                b: 1.0,
                y: 3.0,
            })
            .unwrap(),
        ];
        let mut rng = SplitMix64::new(31);
        let params = StepParams::default();
        let mut state = init(&specs).unwrap();
        let before = residual(&state, &specs);
        for _ in 0..100 {
            let rounds = rng.next_index(8) as u32 + 1;
            let p = if rng.next_bool() {
                pair(1, 2)
            } else {
                pair(2, 1)
            };
            let (next, _) = pb_step(&state, &specs, p, rounds, &params).unwrap();
            state = next;
        }
        // Derivative slopes here are O(10); 100 steps at tol 1e-12 keep the
        // drift far below 1e-9.
        assert!((residual(&state, &specs) - before).abs() <= 1e-9);
    }

    #[test]
    fn pb_rejects_zero_rounds() {
        let specs = [quad(0.0), quad(1.0)];
        let state = init(&specs).unwrap();
        assert!(matches!(
            pb_step(&state, &specs, pair(1, 2), 0, &StepParams::default()),
            Err(EngineError::InvalidRounds)
        ));
    }

    #[test]
    fn select_rounds_examples() {
        assert_eq!(select_rounds(RoundsPolicy::Fixed(3), 100.0), 3);
        assert_eq!(select_rounds(RoundsPolicy::Adaptive(1.0), 8.0), 3);
        assert_eq!(select_rounds(RoundsPolicy::Adaptive(1.0), 0.5), 1);
        assert_eq!(select_rounds(RoundsPolicy::Adaptive(1.0), 0.0), 1);
        // Post-iteration gap hits δ: 2⁻³·8 = 1.
        assert_eq!(select_rounds(RoundsPolicy::Adaptive(0.25), 10.0), 6);
    }

    #[test]
    fn invalid_pairs_are_rejected() {
        let specs = [quad(0.0), quad(1.0)];
        let state = init(&specs).unwrap();
        for (i, j) in [(1, 3), (0, 2), (5, 6)] {
            let p = GossipPair {
                initiator: NodeId(i),
                peer: NodeId(j),
            };
            assert!(pe_step(&state, &specs, p, &StepParams::default()).is_err());
        }
    }
}

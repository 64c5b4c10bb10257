//! Gossip algorithms for scalar convex consensus optimization.
//!
//! An `N`-node network holds one strictly convex, continuously
//! differentiable function per node, each with a minimizer inside a common
//! open interval, and the nodes want the minimizer `x*` of the sum. Two
//! gossip engines solve this without stepsizes, cycles, or routing, by
//! keeping `Σ_i f_i′(x̂_i)` conserved at zero while pairs of neighbors pull
//! their estimates together:
//!
//! * **Pairwise equalizing** — the gossiping pair jumps straight to the
//!   value that equalizes both estimates under the conserved sum, which
//!   requires a one-time exchange of function descriptors per pair.
//! * **Pairwise bisectioning** — the pair runs `R` rounds of bisection on
//!   derivative *differences* and only approaches the equalized value,
//!   never revealing its functions, at the price of more real-number
//!   traffic per iteration.
//!
//! On all-quadratic instances equalizing reduces exactly to pairwise
//! averaging. Convergence for both engines is monitored through a common
//! Lyapunov function built from first-order convexity gaps; the
//! [`diagnostics`] module computes it, its predicted per-step drop, the
//! conservation residual, and the supporting bound checks, while
//! [`harness`] wires objectives, topologies, schedulers, engines, and
//! diagnostics into deterministic, replayable experiments behind the
//! `gossip-opt` CLI.
//!
//! ```
//! use gossip_opt::engines::{init, pe_step, PeStepOutcome, StepParams};
//! use gossip_opt::network::{GossipPair, NodeId};
//! use gossip_opt::objective::ObjectiveSpec;
//!
//! let specs: Vec<ObjectiveSpec> = ["quadratic:1,0", "exp-plus-linear:1,3"]
//!     .iter()
//!     .map(|s| s.parse().unwrap())
//!     .collect();
//! let state = init(&specs).unwrap();
//! let pair = GossipPair::new(NodeId(1), NodeId(2)).unwrap();
//! let (next, outcome) = pe_step(&state, &specs, pair, &StepParams::default()).unwrap();
//!
//! // Both nodes now hold the equalized value, inside the old envelope,
//! // and the derivative sum is still (numerically) zero.
//! assert_eq!(next.estimates[0], next.estimates[1]);
//! assert!(matches!(outcome, PeStepOutcome::Applied { .. }));
//! let residual: f64 = specs
//!     .iter()
//!     .zip(&next.estimates)
//!     .map(|(f, &x)| f.deriv(x).unwrap())
//!     .sum();
//! assert!(residual.abs() < 1e-11);
//! ```

pub mod diagnostics;
pub mod engines;
pub mod harness;
pub mod network;
pub mod objective;
pub mod rng;
pub mod rootfind;

pub use engines::{ConsensusState, StepParams};
pub use network::{GossipPair, NodeId};
pub use objective::{ObjectiveKind, ObjectiveSpec};

//! Time-varying gossip topologies and pair schedulers.
//!
//! A topology is the per-iteration undirected edge set `E(k)` over nodes
//! `1..=N`; a scheduler turns it into the gossip pair for iteration `k`. The
//! emitted pair is ordered: the first node initiates the gossip, which is
//! what decides protocol roles downstream. Randomized schedulers draw from
//! [`SplitMix64`](crate::rng), so a seed pins the entire pair
//! sequence across runs and platforms.
//!
//! The connectivity assumption behind convergence quantifies over an
//! infinite gossip sequence; [`window_connected`] is its finite surrogate,
//! asking whether the pairs in a trailing window connect the whole node set.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SplitMix64;

/// Default trailing-window length for the connectivity surrogate.
pub fn default_connect_window(n_nodes: u32) -> usize {
    50 * n_nodes as usize
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("invalid topology: {reason}")]
    InvalidTopology { reason: String },
    #[error("invalid scheduler: {reason}")]
    InvalidScheduler { reason: String },
    /// A scripted schedule or topology has no entry for iteration `k`.
    #[error("schedule exhausted at iteration {k}")]
    ScheduleExhausted { k: u64 },
    /// A scripted pair is not an edge of `E(k)`.
    #[error("pair ({i}, {j}) is not in the edge set at iteration {k}")]
    PairNotInEdgeSet { k: u64, i: u32, j: u32 },
    /// The scheduler found no selectable edge at iteration `k`.
    #[error("no selectable edge at iteration {k}")]
    NoSelectableEdge { k: u64 },
}

/// 1-based node identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    /// Zero-based index into per-node vectors.
    pub fn index(self) -> usize {
        (self.0 - 1) as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// An undirected edge, stored with the smaller endpoint first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Edge {
    a: NodeId,
    b: NodeId,
}

impl Edge {
    pub fn new(i: NodeId, j: NodeId) -> Result<Self, NetworkError> {
        if i == j {
            return Err(NetworkError::InvalidTopology {
                reason: format!("self-loop edge ({i}, {j})"),
            });
        }
        Ok(if i < j {
            Self { a: i, b: j }
        } else {
            Self { a: j, b: i }
        })
    }

    pub fn a(&self) -> NodeId {
        self.a
    }

    pub fn b(&self) -> NodeId {
        self.b
    }
}

/// An ordered gossip pair: `initiator` starts the exchange with `peer`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GossipPair {
    pub initiator: NodeId,
    pub peer: NodeId,
}

impl GossipPair {
    pub fn new(initiator: NodeId, peer: NodeId) -> Result<Self, NetworkError> {
        if initiator == peer {
            return Err(NetworkError::InvalidScheduler {
                reason: format!("gossip pair with identical nodes ({initiator}, {peer})"),
            });
        }
        Ok(Self { initiator, peer })
    }

    pub fn edge(&self) -> Edge {
        Edge::new(self.initiator, self.peer).expect("pair nodes are distinct")
    }
}

impl fmt::Display for GossipPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.initiator, self.peer)
    }
}

/// How the edge set varies over iterations.
#[derive(Debug, Clone, PartialEq)]
pub enum TopologyMode {
    /// The same edge set at every iteration.
    Static(Vec<Edge>),
    /// Edge-set frames cycled with period `frames.len()`.
    Periodic(Vec<Vec<Edge>>),
    /// Explicit edge set per iteration; exhausted past the end.
    Scripted(Vec<Vec<Edge>>),
}

/// The time-varying graph `G(k) = (V, E(k))`.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologySpec {
    n_nodes: u32,
    mode: TopologyMode,
}

impl TopologySpec {
    pub fn new(n_nodes: u32, mode: TopologyMode) -> Result<Self, NetworkError> {
        if n_nodes < 2 {
            return Err(NetworkError::InvalidTopology {
                reason: format!("need at least 2 nodes, got {n_nodes}"),
            });
        }
        let check_frame = |frame: &mut Vec<Edge>| -> Result<(), NetworkError> {
            if frame.is_empty() {
                return Err(NetworkError::InvalidTopology {
                    reason: "empty edge set".to_owned(),
                });
            }
            for e in frame.iter() {
                if e.b.0 > n_nodes || e.a.0 == 0 {
                    return Err(NetworkError::InvalidTopology {
                        reason: format!("edge ({}, {}) outside 1..={n_nodes}", e.a, e.b),
                    });
                }
            }
            // Canonical frame order so schedulers are insensitive to config
            // edge order.
            frame.sort_unstable();
            frame.dedup();
            Ok(())
        };
        let mode = {
            let mut mode = mode;
            match &mut mode {
                TopologyMode::Static(frame) => check_frame(frame)?,
                TopologyMode::Periodic(frames) | TopologyMode::Scripted(frames) => {
                    if frames.is_empty() {
                        return Err(NetworkError::InvalidTopology {
                            reason: "no edge-set frames".to_owned(),
                        });
                    }
                    for frame in frames.iter_mut() {
                        check_frame(frame)?;
                    }
                }
            }
            mode
        };
        Ok(Self { n_nodes, mode })
    }

    /// Convenience: a static ring 1−2−…−N−1.
    pub fn ring(n_nodes: u32) -> Result<Self, NetworkError> {
        if n_nodes < 2 {
            return Err(NetworkError::InvalidTopology {
                reason: format!("need at least 2 nodes, got {n_nodes}"),
            });
        }
        let mut edges = Vec::with_capacity(n_nodes as usize);
        for i in 1..n_nodes {
            edges.push(Edge::new(NodeId(i), NodeId(i + 1))?);
        }
        if n_nodes > 2 {
            edges.push(Edge::new(NodeId(n_nodes), NodeId(1))?);
        }
        Self::new(n_nodes, TopologyMode::Static(edges))
    }

    pub fn n_nodes(&self) -> u32 {
        self.n_nodes
    }

    /// The edge set at iteration `k` (1-based).
    pub fn edges_at(&self, k: u64) -> Result<&[Edge], NetworkError> {
        match &self.mode {
            TopologyMode::Static(frame) => Ok(frame),
            TopologyMode::Periodic(frames) => Ok(&frames[((k - 1) % frames.len() as u64) as usize]),
            TopologyMode::Scripted(frames) => frames
                .get((k - 1) as usize)
                .map(Vec::as_slice)
                .ok_or(NetworkError::ScheduleExhausted { k }),
        }
    }

    pub fn has_edge(&self, k: u64, edge: Edge) -> Result<bool, NetworkError> {
        Ok(self.edges_at(k)?.binary_search(&edge).is_ok())
    }
}

/// The pair-selection rule.
#[derive(Debug, Clone, PartialEq)]
pub enum SchedulerSpec {
    /// Uniform draw from `E(k)`; a second draw picks the initiator side.
    UniformRandomEdge { seed: u64 },
    /// Edges of `E(k)` in canonical order, index `(k−1) mod |E(k)|`; the
    /// smaller node initiates.
    RoundRobin,
    /// Explicit pair per iteration, in given (initiator, peer) order.
    Scripted { pairs: Vec<GossipPair> },
    /// Uniform draw restricted to edges inside one node group; cross-group
    /// edges are never selected. This is the pathological pattern that
    /// starves connectivity.
    CliquePartition { seed: u64, groups: Vec<Vec<NodeId>> },
}

/// Runtime scheduler state. Owns the RNG stream; advance it one iteration at
/// a time via [`Scheduler::next_pair`].
#[derive(Debug, Clone)]
pub struct Scheduler {
    spec: SchedulerSpec,
    rng: SplitMix64,
    /// Group id per node index for clique partitions.
    group_of: Vec<usize>,
}

impl Scheduler {
    pub fn new(spec: SchedulerSpec, n_nodes: u32) -> Result<Self, NetworkError> {
        let seed = match &spec {
            SchedulerSpec::UniformRandomEdge { seed }
            | SchedulerSpec::CliquePartition { seed, .. } => *seed,
            _ => 0,
        };
        let mut group_of = Vec::new();
        if let SchedulerSpec::CliquePartition { groups, .. } = &spec {
            group_of = vec![usize::MAX; n_nodes as usize];
            for (g, members) in groups.iter().enumerate() {
                for &node in members {
                    if node.0 == 0 || node.0 > n_nodes {
                        return Err(NetworkError::InvalidScheduler {
                            reason: format!("group node {node} outside 1..={n_nodes}"),
                        });
                    }
                    if group_of[node.index()] != usize::MAX {
                        return Err(NetworkError::InvalidScheduler {
                            reason: format!("node {node} appears in two groups"),
                        });
                    }
                    group_of[node.index()] = g;
                }
            }
            if group_of.contains(&usize::MAX) {
                return Err(NetworkError::InvalidScheduler {
                    reason: "groups must cover every node".to_owned(),
                });
            }
        }
        Ok(Self {
            spec,
            rng: SplitMix64::new(seed),
            group_of,
        })
    }

    /// Produces the gossip pair `u(k)`, always an element of `E(k)`.
    pub fn next_pair(&mut self, k: u64, topo: &TopologySpec) -> Result<GossipPair, NetworkError> {
        match &self.spec {
            SchedulerSpec::UniformRandomEdge { .. } => {
                let edges = topo.edges_at(k)?;
                let edge = edges[self.rng.next_index(edges.len())];
                Ok(orient(edge, self.rng.next_bool()))
            }
            SchedulerSpec::RoundRobin => {
                let edges = topo.edges_at(k)?;
                let edge = edges[((k - 1) % edges.len() as u64) as usize];
                Ok(GossipPair {
                    initiator: edge.a,
                    peer: edge.b,
                })
            }
            SchedulerSpec::Scripted { pairs } => {
                let pair = *pairs
                    .get((k - 1) as usize)
                    .ok_or(NetworkError::ScheduleExhausted { k })?;
                if !topo.has_edge(k, pair.edge())? {
                    return Err(NetworkError::PairNotInEdgeSet {
                        k,
                        i: pair.initiator.0,
                        j: pair.peer.0,
                    });
                }
                Ok(pair)
            }
            SchedulerSpec::CliquePartition { .. } => {
                let edges = topo.edges_at(k)?;
                let selectable: Vec<Edge> = edges
                    .iter()
                    .copied()
                    .filter(|e| self.group_of[e.a.index()] == self.group_of[e.b.index()])
                    .collect();
                if selectable.is_empty() {
                    return Err(NetworkError::NoSelectableEdge { k });
                }
                let edge = selectable[self.rng.next_index(selectable.len())];
                Ok(orient(edge, self.rng.next_bool()))
            }
        }
    }
}

fn orient(edge: Edge, swap: bool) -> GossipPair {
    if swap {
        GossipPair {
            initiator: edge.b,
            peer: edge.a,
        }
    } else {
        GossipPair {
            initiator: edge.a,
            peer: edge.b,
        }
    }
}

/// True iff the union of the trailing `window` pairs connects all
/// `n_nodes` nodes.
pub fn window_connected(history: &[GossipPair], window: usize, n_nodes: u32) -> bool {
    let n = n_nodes as usize;
    if n <= 1 {
        return true;
    }
    let start = history.len().saturating_sub(window);
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut components = n;
    for pair in &history[start..] {
        let (ra, rb) = (
            find(&mut parent, pair.initiator.index()),
            find(&mut parent, pair.peer.index()),
        );
        if ra != rb {
            parent[ra] = rb;
            components -= 1;
        }
    }
    components == 1
}

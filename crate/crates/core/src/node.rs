//! Per-node heartbeat failure detector for partitionable networks.
//!
//! [`NodeState`] is a transport-free state machine with three entry points:
//! [`NodeState::on_heartbeat_tick`], [`NodeState::on_receive`] and
//! [`NodeState::on_timer_expiry`]. The caller owns the local clock and
//! advances it with [`NodeState::set_clock`] before every call.
//!
//! Every node keeps two suspicion vectors. `suspect_local` holds what the
//! node believes about its own component (and the crashed nodes bordering
//! it); it is the only vector gossiped in heartbeats. `suspect` is derived
//! from `suspect_local` plus the learned path sets: a non-neighbor whose every
//! known path crosses a locally suspected node is also suspected.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::path::{NodeId, Path, PathSetArray};

/// Precondition failures of the entry points. The simulator never triggers
/// these; seeing one means the driving harness is broken.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContractError {
    #[error("node id {id} is outside the universe of {n} nodes")]
    UnknownNode { id: NodeId, n: usize },
    #[error("node {0} cannot be its own neighbor")]
    SelfNeighbor(NodeId),
    #[error("heartbeat period must be at least one tick")]
    ZeroPeriod,
    #[error("node {node} has crashed")]
    Crashed { node: NodeId },
    #[error("{from} is not an initial neighbor of {node}")]
    NotNeighbor { node: NodeId, from: NodeId },
    #[error("clock {clock} is not a multiple of the heartbeat period {period}")]
    OffPeriod { clock: u64, period: u64 },
    #[error("timer for {neighbor} at node {node} is not due: elapsed {elapsed}, timeout {timeout}")]
    TimerNotDue { node: NodeId, neighbor: NodeId, elapsed: u64, timeout: u64 },
    #[error("timer for {neighbor} at node {node} already fired in this silence period")]
    AlreadySuspected { node: NodeId, neighbor: NodeId },
    #[error("message sized for {got} nodes, expected {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("clock moved backwards from {from} to {to}")]
    ClockRegression { from: u64, to: u64 },
}

/// Shortest-path length in edges, or unreachable.
///
/// `INFINITE` is larger than any simple path length, so plain comparison
/// implements the "shorter than" test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Hops(usize);

impl Hops {
    pub const INFINITE: Hops = Hops(usize::MAX);

    pub fn finite(edges: usize) -> Self {
        Hops(edges)
    }

    pub fn is_finite(self) -> bool {
        self != Hops::INFINITE
    }

    pub fn get(self) -> Option<usize> {
        self.is_finite().then_some(self.0)
    }
}

/// One boolean per node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SuspectVector(Vec<bool>);

impl SuspectVector {
    pub fn all_false(n: usize) -> Self {
        SuspectVector(vec![false; n])
    }

    pub fn from_flags(flags: Vec<bool>) -> Self {
        SuspectVector(flags)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, node: NodeId) -> bool {
        self.0[node.index()]
    }

    pub fn set(&mut self, node: NodeId, value: bool) {
        self.0[node.index()] = value;
    }

    pub fn suspected(&self) -> BTreeSet<NodeId> {
        self.0.iter().enumerate().filter(|(_, s)| **s).map(|(i, _)| NodeId::from(i)).collect()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }
}

/// The only wire message: the sender's `suspect_local` and path sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeartbeatMessage {
    pub sender: NodeId,
    pub suspect: SuspectVector,
    pub paths: Arc<PathSetArray>,
    digest: u64,
}

impl HeartbeatMessage {
    pub fn new(sender: NodeId, suspect: SuspectVector, paths: Arc<PathSetArray>) -> Self {
        let digest = message_digest(sender, &suspect, paths_digest(&paths));
        Self { sender, suspect, paths, digest }
    }

    /// Content hash of the payload, stable across runs and platforms.
    pub fn digest(&self) -> u64 {
        self.digest
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuspicionChange {
    pub target: NodeId,
    pub suspected: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeoutChange {
    pub neighbor: NodeId,
    pub old: u64,
    pub new: u64,
}

/// Observable side effects of one entry-point call.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Effects {
    pub suspicion: Vec<SuspicionChange>,
    pub timeout: Option<TimeoutChange>,
}

/// Length of the shortest path in `paths` that avoids `exclude` and every
/// suspected node other than `target`.
pub fn shortest_valid_length(
    paths: &BTreeSet<Path>,
    exclude: Option<NodeId>,
    suspects: &SuspectVector,
    target: NodeId,
) -> Hops {
    // BTreeSet<Path> iterates shortest first.
    paths
        .iter()
        .find(|path| {
            path.nodes().iter().all(|&u| Some(u) != exclude && (u == target || !suspects.get(u)))
        })
        .map_or(Hops::INFINITE, |path| Hops::finite(path.len()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeState {
    self_id: NodeId,
    neighbors: BTreeSet<NodeId>,
    period: u64,
    clock: u64,
    last_contact: BTreeMap<NodeId, u64>,
    timeout: BTreeMap<NodeId, u64>,
    suspect_local: SuspectVector,
    suspect: SuspectVector,
    paths: Arc<PathSetArray>,
    crashed: bool,
    /// Last path snapshot merged from each neighbor; merging it again is a no-op.
    #[serde(skip)]
    merged: BTreeMap<NodeId, Arc<PathSetArray>>,
    #[serde(skip)]
    paths_digest: Option<u64>,
}

impl PartialEq for NodeState {
    fn eq(&self, other: &Self) -> bool {
        self.self_id == other.self_id
            && self.neighbors == other.neighbors
            && self.period == other.period
            && self.clock == other.clock
            && self.last_contact == other.last_contact
            && self.timeout == other.timeout
            && self.suspect_local == other.suspect_local
            && self.suspect == other.suspect
            && self.paths == other.paths
            && self.crashed == other.crashed
    }
}

impl Eq for NodeState {}

impl NodeState {
    pub fn new(self_id: NodeId, neighbors: BTreeSet<NodeId>, n: usize, period: u64) -> Result<Self, ContractError> {
        if self_id.index() >= n {
            return Err(ContractError::UnknownNode { id: self_id, n });
        }
        if let Some(&bad) = neighbors.iter().find(|q| q.index() >= n) {
            return Err(ContractError::UnknownNode { id: bad, n });
        }
        if neighbors.contains(&self_id) {
            return Err(ContractError::SelfNeighbor(self_id));
        }
        if period == 0 {
            return Err(ContractError::ZeroPeriod);
        }
        let mut paths = PathSetArray::empty(n);
        paths.insert(self_id, Path::singleton(self_id));
        for &q in &neighbors {
            paths.insert(q, Path::new(vec![q, self_id]));
        }
        Ok(Self {
            self_id,
            last_contact: neighbors.iter().map(|&q| (q, 0)).collect(),
            timeout: neighbors.iter().map(|&q| (q, period)).collect(),
            neighbors,
            period,
            clock: 0,
            suspect_local: SuspectVector::all_false(n),
            suspect: SuspectVector::all_false(n),
            paths: Arc::new(paths),
            crashed: false,
            merged: BTreeMap::new(),
            paths_digest: None,
        })
    }

    pub fn id(&self) -> NodeId {
        self.self_id
    }

    pub fn n(&self) -> usize {
        self.suspect.len()
    }

    pub fn neighbors(&self) -> &BTreeSet<NodeId> {
        &self.neighbors
    }

    pub fn is_neighbor(&self, q: NodeId) -> bool {
        self.neighbors.contains(&q)
    }

    pub fn period(&self) -> u64 {
        self.period
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn last_contact(&self, q: NodeId) -> Option<u64> {
        self.last_contact.get(&q).copied()
    }

    pub fn timeout(&self, q: NodeId) -> Option<u64> {
        self.timeout.get(&q).copied()
    }

    pub fn timeouts(&self) -> &BTreeMap<NodeId, u64> {
        &self.timeout
    }

    pub fn suspect_local(&self) -> &SuspectVector {
        &self.suspect_local
    }

    pub fn suspect(&self) -> &SuspectVector {
        &self.suspect
    }

    pub fn paths(&self) -> &PathSetArray {
        &self.paths
    }

    pub fn is_crashed(&self) -> bool {
        self.crashed
    }

    /// Local tick at which the timer for `q` is due, if it is armed.
    pub fn timer_deadline(&self, q: NodeId) -> Option<u64> {
        if self.crashed || self.suspect_local.get(q) {
            return None;
        }
        Some(self.last_contact.get(&q)? + self.timeout.get(&q)?)
    }

    pub fn set_clock(&mut self, tick: u64) -> Result<(), ContractError> {
        if tick < self.clock {
            return Err(ContractError::ClockRegression { from: self.clock, to: tick });
        }
        self.clock = tick;
        Ok(())
    }

    /// Marks the node crashed; every later entry-point call is rejected.
    pub fn crash(&mut self) {
        self.crashed = true;
    }

    pub fn query_suspects(&self) -> BTreeSet<NodeId> {
        self.suspect.suspected()
    }

    /// Heartbeats for every initial neighbor; the state is not modified
    /// apart from caching the payload digest.
    pub fn on_heartbeat_tick(&mut self) -> Result<Vec<(NodeId, HeartbeatMessage)>, ContractError> {
        self.ensure_alive()?;
        if !self.clock.is_multiple_of(self.period) {
            return Err(ContractError::OffPeriod { clock: self.clock, period: self.period });
        }
        if self.neighbors.is_empty() {
            return Ok(Vec::new());
        }
        let pd = *self.paths_digest.get_or_insert_with(|| paths_digest(&self.paths));
        let msg = HeartbeatMessage {
            sender: self.self_id,
            suspect: self.suspect_local.clone(),
            paths: Arc::clone(&self.paths),
            digest: message_digest(self.self_id, &self.suspect_local, pd),
        };
        Ok(self.neighbors.iter().map(|&q| (q, msg.clone())).collect())
    }

    pub fn on_receive(&mut self, msg: &HeartbeatMessage) -> Result<Effects, ContractError> {
        self.ensure_alive()?;
        let sender = msg.sender;
        if !self.neighbors.contains(&sender) {
            return Err(ContractError::NotNeighbor { node: self.self_id, from: sender });
        }
        let n = self.n();
        for got in [msg.suspect.len(), msg.paths.len()] {
            if got != n {
                return Err(ContractError::SizeMismatch { expected: n, got });
            }
        }

        let before = self.suspect.clone();
        let mut effects = Effects::default();

        if self.suspect_local.get(sender) {
            let old = self.timeout[&sender];
            let new = 2 * (self.clock - self.last_contact[&sender]);
            self.timeout.insert(sender, new);
            self.suspect_local.set(sender, false);
            if new != old {
                effects.timeout = Some(TimeoutChange { neighbor: sender, old, new });
            }
        }
        self.last_contact.insert(sender, self.clock);

        let already_merged = self.merged.get(&sender).is_some_and(|prev| Arc::ptr_eq(prev, &msg.paths));
        let me = self.self_id;
        for i in 0..n {
            let r = NodeId::from(i);
            if r == me {
                continue;
            }
            if !self.neighbors.contains(&r) {
                let hop_from_msg = shortest_valid_length(msg.paths.get(r), Some(me), &msg.suspect, r);
                let hop = shortest_valid_length(self.paths.get(r), None, &self.suspect_local, r);
                if hop_from_msg < hop {
                    self.suspect_local.set(r, msg.suspect.get(r));
                }
            }
            // Paths are extended for neighbors too so that forwarded path
            // sets carry every simple route, not only the direct edge.
            if !already_merged {
                self.merge_paths(r, msg.paths.get(r));
            }
        }
        if !already_merged {
            self.merged.insert(sender, Arc::clone(&msg.paths));
        }

        self.recompute_derived();
        effects.suspicion = diff(&before, &self.suspect);
        Ok(effects)
    }

    pub fn on_timer_expiry(&mut self, q: NodeId) -> Result<Effects, ContractError> {
        self.ensure_alive()?;
        if !self.neighbors.contains(&q) {
            return Err(ContractError::NotNeighbor { node: self.self_id, from: q });
        }
        if self.suspect_local.get(q) {
            return Err(ContractError::AlreadySuspected { node: self.self_id, neighbor: q });
        }
        let elapsed = self.clock - self.last_contact[&q];
        let timeout = self.timeout[&q];
        if elapsed < timeout {
            return Err(ContractError::TimerNotDue { node: self.self_id, neighbor: q, elapsed, timeout });
        }
        let before = self.suspect.clone();
        self.suspect_local.set(q, true);
        self.recompute_derived();
        Ok(Effects { suspicion: diff(&before, &self.suspect), timeout: None })
    }

    /// Rebuilds `suspect` from `suspect_local` and the path sets.
    pub fn recompute_derived(&mut self) {
        self.suspect = self.suspect_local.clone();
        let me = self.self_id;
        for i in 0..self.n() {
            let r = NodeId::from(i);
            if r == me || self.neighbors.contains(&r) {
                continue;
            }
            // Vacuously true for an empty set: unheard-of nodes are suspected.
            let all_blocked = self
                .paths
                .get(r)
                .iter()
                .all(|path| path.nodes().iter().any(|&u| u != r && self.suspect_local.get(u)));
            if all_blocked {
                self.suspect.set(r, true);
            }
        }
    }

    /// Full structural check of the state invariants.
    pub fn check_invariants(&self) -> Result<(), String> {
        let me = self.self_id;
        if self.suspect.get(me) || self.suspect_local.get(me) {
            return Err(format!("node {me} suspects itself"));
        }
        for &q in &self.neighbors {
            if self.suspect.get(q) != self.suspect_local.get(q) {
                return Err(format!("node {me}: suspect[{q}] differs from suspect_local[{q}]"));
            }
            if self.timeout[&q] < self.period {
                return Err(format!("node {me}: timeout[{q}] below the heartbeat period"));
            }
            if !self.paths.get(q).contains(&Path::new(vec![q, me])) {
                return Err(format!("node {me}: direct path from neighbor {q} missing"));
            }
        }
        if self.paths.get(me).iter().ne([Path::singleton(me)].iter()) {
            return Err(format!("node {me}: paths[{me}] must be exactly the singleton path"));
        }
        for (origin, set) in self.paths.iter() {
            for path in set {
                if !path.is_simple() || path.first() != origin || path.last() != me {
                    return Err(format!("node {me}: malformed path {path} in paths[{origin}]"));
                }
            }
        }
        Ok(())
    }

    fn merge_paths(&mut self, origin: NodeId, incoming: &BTreeSet<Path>) {
        let me = self.self_id;
        let known = self.paths.get(origin);
        let fresh: Vec<Path> = incoming
            .iter()
            .filter(|p| !p.contains(me))
            .map(|p| p.extended(me))
            .filter(|p| !known.contains(p))
            .collect();
        if fresh.is_empty() {
            return;
        }
        // Detaches from in-flight snapshots only when something is new.
        let paths = Arc::make_mut(&mut self.paths);
        for path in fresh {
            debug_assert!(path.is_simple() && path.first() == origin);
            paths.insert(origin, path);
        }
        self.paths_digest = None;
    }

    fn ensure_alive(&self) -> Result<(), ContractError> {
        if self.crashed {
            Err(ContractError::Crashed { node: self.self_id })
        } else {
            Ok(())
        }
    }
}

fn diff(before: &SuspectVector, after: &SuspectVector) -> Vec<SuspicionChange> {
    before
        .as_slice()
        .iter()
        .zip(after.as_slice())
        .enumerate()
        .filter(|(_, (b, a))| b != a)
        .map(|(i, (_, &a))| SuspicionChange { target: NodeId::from(i), suspected: a })
        .collect()
}

fn paths_digest(paths: &PathSetArray) -> u64 {
    let mut hasher = Sha256::new();
    for (origin, set) in paths.iter() {
        hasher.update(origin.0.to_le_bytes());
        hasher.update((set.len() as u64).to_le_bytes());
        for path in set {
            hasher.update((path.nodes().len() as u32).to_le_bytes());
            for id in path.nodes() {
                hasher.update(id.0.to_le_bytes());
            }
        }
    }
    truncate(&hasher.finalize())
}

fn message_digest(sender: NodeId, suspect: &SuspectVector, paths: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(sender.0.to_le_bytes());
    hasher.update(suspect.as_slice().iter().map(|&b| b as u8).collect::<Vec<_>>());
    hasher.update(paths.to_le_bytes());
    truncate(&hasher.finalize())
}

fn truncate(bytes: &[u8]) -> u64 {
    let mut head = [0u8; 8];
    head.copy_from_slice(&bytes[..8]);
    u64::from_be_bytes(head)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u32]) -> BTreeSet<NodeId> {
        v.iter().copied().map(NodeId).collect()
    }

    fn node(p: u32, neighbors: &[u32], n: usize, period: u64) -> NodeState {
        NodeState::new(NodeId(p), ids(neighbors), n, period).unwrap()
    }

    fn paths_of(list: &[&[u32]]) -> BTreeSet<Path> {
        list.iter().map(|p| Path::from_ids(p)).collect()
    }

    /// Message from `sender` whose path array holds the given sets.
    fn message(sender: u32, n: usize, suspects: &[u32], sets: &[(u32, &[&[u32]])]) -> HeartbeatMessage {
        let mut paths = PathSetArray::empty(n);
        for (origin, list) in sets {
            for p in *list {
                paths.insert(NodeId(*origin), Path::from_ids(p));
            }
        }
        let mut flags = SuspectVector::all_false(n);
        for s in suspects {
            flags.set(NodeId(*s), true);
        }
        HeartbeatMessage::new(NodeId(sender), flags, Arc::new(paths))
    }

    #[test]
    fn initial_state_for_small_line() {
        let s = node(0, &[1], 3, 5);
        assert_eq!(s.paths().get(NodeId(0)), &paths_of(&[&[0]]));
        assert_eq!(s.paths().get(NodeId(1)), &paths_of(&[&[1, 0]]));
        assert!(s.paths().get(NodeId(2)).is_empty());
        assert_eq!(s.timeout(NodeId(1)), Some(5));
        assert_eq!(s.last_contact(NodeId(1)), Some(0));
        assert!(s.query_suspects().is_empty());
        s.check_invariants().unwrap();
    }

    #[test]
    fn initial_state_singleton_universe() {
        let s = node(0, &[], 1, 1);
        assert_eq!(s.paths().get(NodeId(0)), &paths_of(&[&[0]]));
        assert_eq!(s.suspect().len(), 1);
        assert!(!s.suspect().get(NodeId(0)));
        assert!(!s.suspect_local().get(NodeId(0)));
    }

    #[test]
    fn initial_state_two_neighbors() {
        let s = node(2, &[0, 1], 4, 7);
        assert_eq!(s.timeout(NodeId(0)), Some(7));
        assert_eq!(s.timeout(NodeId(1)), Some(7));
        assert_eq!(s.suspect().as_slice(), &[false; 4]);
    }

    #[test]
    fn construction_errors() {
        assert_eq!(NodeState::new(NodeId(0), ids(&[0]), 2, 5).unwrap_err(), ContractError::SelfNeighbor(NodeId(0)));
        assert_eq!(NodeState::new(NodeId(0), ids(&[1]), 2, 0).unwrap_err(), ContractError::ZeroPeriod);
        assert!(matches!(NodeState::new(NodeId(3), ids(&[]), 2, 1), Err(ContractError::UnknownNode { .. })));
        assert!(matches!(NodeState::new(NodeId(0), ids(&[5]), 2, 1), Err(ContractError::UnknownNode { .. })));
    }

    #[test]
    fn tick_broadcasts_identical_payloads() {
        let mut s = node(0, &[1, 2], 3, 5);
        s.set_clock(10).unwrap();
        let out = s.on_heartbeat_tick().unwrap();
        let dests: Vec<NodeId> = out.iter().map(|(d, _)| *d).collect();
        assert_eq!(dests, vec![NodeId(1), NodeId(2)]);
        assert_eq!(out[0].1, out[1].1);
        assert_eq!(&out[0].1.suspect, s.suspect_local());
        assert_eq!(*out[0].1.paths, *s.paths());
    }

    #[test]
    fn tick_without_neighbors_is_empty() {
        let mut s = node(0, &[], 1, 3);
        assert!(s.on_heartbeat_tick().unwrap().is_empty());
    }

    #[test]
    fn tick_off_period_is_a_contract_failure() {
        let mut s = node(0, &[1], 2, 5);
        s.set_clock(7).unwrap();
        assert_eq!(s.on_heartbeat_tick().unwrap_err(), ContractError::OffPeriod { clock: 7, period: 5 });
    }

    #[test]
    fn tick_after_expiry_carries_suspicion() {
        let mut s = node(0, &[1, 2], 3, 5);
        s.set_clock(5).unwrap();
        s.on_timer_expiry(NodeId(1)).unwrap();
        let out = s.on_heartbeat_tick().unwrap();
        assert!(out.iter().all(|(_, m)| m.suspect.get(NodeId(1)) && !m.suspect.get(NodeId(2))));
    }

    #[test]
    fn shortest_valid_length_cases() {
        let none = SuspectVector::all_false(6);
        let r = NodeId(5);
        assert_eq!(shortest_valid_length(&paths_of(&[&[5, 1, 0]]), None, &none, r), Hops::finite(2));
        assert_eq!(shortest_valid_length(&BTreeSet::new(), None, &none, r), Hops::INFINITE);

        let mut target_suspected = SuspectVector::all_false(6);
        target_suspected.set(r, true);
        assert_eq!(shortest_valid_length(&paths_of(&[&[5, 0]]), None, &target_suspected, r), Hops::finite(1));

        // a=1, b=2, c=3, q=0
        let mut a_suspected = SuspectVector::all_false(6);
        a_suspected.set(NodeId(1), true);
        let set = paths_of(&[&[5, 1, 0], &[5, 2, 3, 0]]);
        assert_eq!(shortest_valid_length(&set, None, &a_suspected, r), Hops::finite(3));
        assert_eq!(shortest_valid_length(&set, Some(NodeId(3)), &a_suspected, r), Hops::INFINITE);
    }

    #[test]
    fn receive_learns_paths_on_a_line() {
        // line 0-1-2, node 0 hears from 1
        let mut s = node(0, &[1], 3, 5);
        s.set_clock(3).unwrap();
        let msg = message(1, 3, &[], &[(1, &[&[1]]), (2, &[&[2, 1]]), (0, &[&[0, 1]])]);
        let effects = s.on_receive(&msg).unwrap();
        assert!(!s.suspect_local().get(NodeId(2)));
        assert_eq!(s.paths().get(NodeId(2)), &paths_of(&[&[2, 1, 0]]));
        assert_eq!(s.last_contact(NodeId(1)), Some(3));
        assert!(effects.suspicion.is_empty());
        s.check_invariants().unwrap();
    }

    #[test]
    fn unheard_non_neighbor_is_suspected_after_derivation() {
        let mut s = node(0, &[1], 3, 5);
        s.recompute_derived();
        assert_eq!(s.query_suspects(), ids(&[2]));
        assert!(!s.suspect_local().get(NodeId(2)));
    }

    #[test]
    fn receive_after_false_suspicion_doubles_elapsed() {
        let mut s = node(0, &[1], 2, 5);
        let hello = message(1, 2, &[], &[(1, &[&[1]])]);
        s.set_clock(6).unwrap();
        s.on_receive(&hello).unwrap();
        s.set_clock(11).unwrap();
        s.on_timer_expiry(NodeId(1)).unwrap();
        assert!(s.suspect_local().get(NodeId(1)));
        s.set_clock(20).unwrap();
        let effects = s.on_receive(&hello).unwrap();
        assert_eq!(s.timeout(NodeId(1)), Some(28));
        assert!(!s.suspect_local().get(NodeId(1)));
        assert_eq!(s.last_contact(NodeId(1)), Some(20));
        assert_eq!(effects.timeout, Some(TimeoutChange { neighbor: NodeId(1), old: 5, new: 28 }));
        assert_eq!(effects.suspicion, vec![SuspicionChange { target: NodeId(1), suspected: false }]);
    }

    #[test]
    fn expiry_then_late_receipt() {
        let mut s = node(0, &[1], 2, 5);
        s.set_clock(5).unwrap();
        let effects = s.on_timer_expiry(NodeId(1)).unwrap();
        assert_eq!(effects.suspicion, vec![SuspicionChange { target: NodeId(1), suspected: true }]);
        assert_eq!(s.query_suspects(), ids(&[1]));
        s.set_clock(9).unwrap();
        s.on_receive(&message(1, 2, &[], &[])).unwrap();
        assert_eq!(s.timeout(NodeId(1)), Some(18));
    }

    #[test]
    fn expiry_preconditions() {
        let mut s = node(0, &[1], 3, 5);
        s.set_clock(4).unwrap();
        assert!(matches!(s.on_timer_expiry(NodeId(1)), Err(ContractError::TimerNotDue { .. })));
        assert!(matches!(s.on_timer_expiry(NodeId(2)), Err(ContractError::NotNeighbor { .. })));
        s.set_clock(5).unwrap();
        s.on_timer_expiry(NodeId(1)).unwrap();
        assert!(matches!(s.on_timer_expiry(NodeId(1)), Err(ContractError::AlreadySuspected { .. })));
    }

    #[test]
    fn cycles_are_not_appended() {
        let mut s = node(0, &[1], 3, 5);
        s.on_receive(&message(1, 3, &[], &[(2, &[&[2, 0, 1]])])).unwrap();
        assert!(s.paths().get(NodeId(2)).is_empty());
    }

    #[test]
    fn equal_hop_does_not_adopt() {
        // ring 0-1-2-3-0: node 0 already knows 2 via 3, hears about 2 from 1
        let mut s = node(0, &[1, 3], 4, 5);
        s.on_receive(&message(3, 4, &[], &[(2, &[&[2, 3]])])).unwrap();
        assert!(!s.suspect_local().get(NodeId(2)));
        // hop = 2 (2·3·0), hop_from_msg = 1 (2·1): adopt
        s.on_receive(&message(1, 4, &[2], &[(2, &[&[2, 1]])])).unwrap();
        assert!(s.suspect_local().get(NodeId(2)));

        // Now a sender whose shortest valid path equals p's own hop.
        let mut t = node(0, &[1, 3], 5, 5);
        // 0 learns 4·2·3·0 (length 3) via 3
        t.on_receive(&message(3, 5, &[], &[(4, &[&[4, 2, 3]])])).unwrap();
        // 1 reports 4 suspected through 4·x·y·1 (length 3, not shorter than 3)
        t.on_receive(&message(1, 5, &[4], &[(4, &[&[4, 2, 3, 1]])])).unwrap();
        assert!(!t.suspect_local().get(NodeId(4)), "hop_from_msg == hop must not adopt");
    }

    #[test]
    fn suspected_target_itself_does_not_invalidate_path() {
        // line 0-1-2; 1 reports 2 crashed with its direct path 2·1
        let mut s = node(0, &[1], 3, 5);
        s.on_receive(&message(1, 3, &[2], &[(2, &[&[2, 1]])])).unwrap();
        assert!(s.suspect_local().get(NodeId(2)));
        assert_eq!(s.query_suspects(), ids(&[2]));
    }

    fn seeded_node_with_two_routes_to_3() -> NodeState {
        // diamond 3-1-0, 3-2-0; node 0 has neighbors 1 and 2
        let mut s = node(0, &[1, 2], 4, 5);
        s.on_receive(&message(1, 4, &[], &[(3, &[&[3, 1]])])).unwrap();
        s.on_receive(&message(2, 4, &[], &[(3, &[&[3, 2]])])).unwrap();
        assert_eq!(s.paths().get(NodeId(3)), &paths_of(&[&[3, 1, 0], &[3, 2, 0]]));
        s
    }

    #[test]
    fn derived_suspicion_when_every_path_is_blocked() {
        let mut s = seeded_node_with_two_routes_to_3();
        s.set_clock(5).unwrap();
        s.on_timer_expiry(NodeId(1)).unwrap();
        assert!(!s.suspect().get(NodeId(3)), "route via 2 survives");
        assert_eq!(s.suspect().get(NodeId(3)), s.suspect_local().get(NodeId(3)));
        let effects = s.on_timer_expiry(NodeId(2)).unwrap();
        assert!(s.suspect().get(NodeId(3)));
        assert!(!s.suspect_local().get(NodeId(3)));
        assert!(effects.suspicion.contains(&SuspicionChange { target: NodeId(3), suspected: true }));
    }

    #[test]
    fn ring_expiry_blocks_only_known_route_until_another_is_learned() {
        // ring 0-1-2-3-0, node 0 only knows 2 via 1
        let mut s = node(0, &[1, 3], 4, 5);
        s.on_receive(&message(1, 4, &[], &[(2, &[&[2, 1]])])).unwrap();
        assert!(!s.suspect().get(NodeId(2)));
        s.set_clock(5).unwrap();
        s.on_timer_expiry(NodeId(1)).unwrap();
        assert!(s.suspect().get(NodeId(2)));
        s.set_clock(6).unwrap();
        s.on_receive(&message(3, 4, &[1], &[(2, &[&[2, 3]])])).unwrap();
        assert!(!s.suspect().get(NodeId(2)));
        assert!(s.suspect().get(NodeId(1)));
    }

    #[test]
    fn crashed_node_rejects_everything() {
        let mut s = node(0, &[1], 2, 5);
        s.crash();
        let before = s.clone();
        assert!(matches!(s.on_heartbeat_tick(), Err(ContractError::Crashed { .. })));
        assert!(matches!(s.on_receive(&message(1, 2, &[], &[])), Err(ContractError::Crashed { .. })));
        assert!(matches!(s.on_timer_expiry(NodeId(1)), Err(ContractError::Crashed { .. })));
        assert_eq!(s, before);
    }

    #[test]
    fn non_neighbor_message_is_rejected() {
        let mut s = node(0, &[1], 3, 5);
        assert_eq!(
            s.on_receive(&message(2, 3, &[], &[])).unwrap_err(),
            ContractError::NotNeighbor { node: NodeId(0), from: NodeId(2) }
        );
    }

    #[test]
    fn adopted_suspicion_of_self_is_impossible() {
        let mut s = node(0, &[1], 3, 5);
        s.on_receive(&message(1, 3, &[0, 2], &[(0, &[&[0, 1]]), (2, &[&[2, 1]])])).unwrap();
        assert!(!s.suspect().get(NodeId(0)));
        assert!(!s.suspect_local().get(NodeId(0)));
    }
}

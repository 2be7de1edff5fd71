//! Ground truth for a scenario and machine checks of a trace against it.
//!
//! The final graph is the initial graph with every node that ever crashes
//! removed. A correct node must eventually suspect exactly the nodes outside
//! its own component there (strong completeness plus eventual strong
//! accuracy). "Eventually" is checked as suffix stability: the expected
//! suspect sets hold from `t_f` to the horizon and nothing changes during
//! the trailing stability window.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{conformance_check, ConformanceViolation};
use crate::graph::NetworkGraph;
use crate::path::{NodeId, Path};
use crate::scenario::Scenario;
use crate::time::Time;
use crate::trace::{Record, Trace};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("node {0} crashes; only correct nodes have expected suspect sets")]
    CrashedNode(NodeId),
    #[error("trace and scenario disagree: {0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinalGraph {
    pub initial: NetworkGraph,
    pub graph: NetworkGraph,
    pub components: Vec<BTreeSet<NodeId>>,
    pub crashed: BTreeSet<NodeId>,
    pub t_star: Time,
}

/// The network graph at time `t`: nodes crashed at or before `t` removed.
pub fn graph_at(scenario: &Scenario, t: Time) -> NetworkGraph {
    let gone: BTreeSet<NodeId> = scenario.crashes().iter().filter(|c| c.time <= t).map(|c| c.node).collect();
    scenario.initial_graph().without(&gone)
}

pub fn final_graph(scenario: &Scenario) -> FinalGraph {
    let initial = scenario.initial_graph();
    let crashed = scenario.crashed_nodes();
    let graph = initial.without(&crashed);
    let components = graph.components();
    FinalGraph { initial, graph, components, crashed, t_star: scenario.t_star() }
}

impl FinalGraph {
    pub fn universe(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.initial.nodes()
    }

    pub fn is_correct(&self, p: NodeId) -> bool {
        !self.crashed.contains(&p)
    }

    pub fn component_of(&self, p: NodeId) -> Option<&BTreeSet<NodeId>> {
        self.components.iter().find(|c| c.contains(&p))
    }

    /// Every node outside `p`'s final component.
    pub fn expected_suspects(&self, p: NodeId) -> Result<BTreeSet<NodeId>, OracleError> {
        let comp = self.component_of(p).ok_or(OracleError::CrashedNode(p))?;
        Ok(self.universe().filter(|q| !comp.contains(q)).collect())
    }

    /// Crashed nodes adjacent, in the initial graph, to some member of `comp`.
    pub fn crashed_border(&self, comp: &BTreeSet<NodeId>) -> BTreeSet<NodeId> {
        comp.iter().flat_map(|&u| self.initial.neighbors(u)).filter(|v| self.crashed.contains(v)).collect()
    }

    /// Every initial-graph path entering a component from outside crosses a
    /// crashed initial neighbor of that component. Brute force; small graphs only.
    pub fn check_component_borders(&self) -> Result<(), String> {
        for comp in &self.components {
            let border = self.crashed_border(comp);
            for outside in self.universe().filter(|x| !comp.contains(x)) {
                for &inside in comp {
                    for path in self.initial.simple_paths(outside, inside) {
                        if !path.iter().any(|u| border.contains(u)) {
                            return Err(format!("path {path:?} reaches component {comp:?} without crossing a crashed border node"));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// An unreachable node is not suspected.
    Completeness,
    /// A reachable node is suspected.
    Accuracy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub node: NodeId,
    pub target: NodeId,
    pub kind: ViolationKind,
    /// Since when the wrong value has been held.
    pub time: Time,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING-KEBAB-CASE")]
pub enum Status {
    Converged,
    /// A wrong suspect set that was stable over the trailing window.
    Violation,
    /// The run ended before the outcome could be judged.
    InconclusiveHorizon,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detection {
    pub node: NodeId,
    pub target: NodeId,
    /// Start of the final, permanent suspicion.
    pub time: Time,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: Status,
    pub converged: bool,
    pub t_f_observed: Option<Time>,
    pub violations: Vec<Violation>,
    pub detections: Vec<Detection>,
}

/// Replays suspicion records and compares each correct node's suspect set
/// with the oracle.
pub fn check_convergence(trace: &Trace, final_graph: &FinalGraph, stability_window: Time) -> Result<Verdict, OracleError> {
    let n = final_graph.initial.node_count();
    if trace.n != n {
        return Err(OracleError::Mismatch(format!("trace has {} nodes, scenario has {n}", trace.n)));
    }
    if let Some(r) = trace.records.iter().find(|r| r.node().index() >= n) {
        return Err(OracleError::Mismatch(format!("record names unknown node {}", r.node())));
    }

    // (current value, since when) per correct (p, q)
    let mut state: BTreeMap<(NodeId, NodeId), (bool, Time)> = BTreeMap::new();
    let mut last_change: BTreeMap<NodeId, Time> = BTreeMap::new();
    for record in &trace.records {
        if let Record::Suspicion { time, node, target, suspected, .. } = *record {
            if target.index() >= n {
                return Err(OracleError::Mismatch(format!("suspicion of unknown node {target}")));
            }
            if final_graph.is_correct(node) {
                state.insert((node, target), (suspected, time));
                last_change.insert(node, time);
            }
        }
    }

    let mut violations = Vec::new();
    let mut detections = Vec::new();
    for p in final_graph.universe().filter(|&p| final_graph.is_correct(p)) {
        let expected = final_graph.expected_suspects(p)?;
        if let Some(fs) = trace.final_states.get(p.index()) {
            let replayed: BTreeSet<NodeId> =
                final_graph.universe().filter(|&q| state.get(&(p, q)).is_some_and(|(v, _)| *v)).collect();
            if fs.query_suspects() != replayed {
                return Err(OracleError::Mismatch(format!("node {p}: final state disagrees with its suspicion records")));
            }
        }
        for q in final_graph.universe() {
            let (value, since) = state.get(&(p, q)).copied().unwrap_or((false, Time::ZERO));
            let should = expected.contains(&q);
            if value != should {
                let kind = if should { ViolationKind::Completeness } else { ViolationKind::Accuracy };
                violations.push(Violation { node: p, target: q, kind, time: since });
            } else if should {
                detections.push(Detection { node: p, target: q, time: since });
            }
        }
    }

    let t_f = last_change.values().copied().max().unwrap_or(Time::ZERO);
    let horizon = trace.horizon;
    let judged = stability_window <= horizon - final_graph.t_star;
    let stable = t_f <= horizon - stability_window;
    let status = match (judged && stable, violations.is_empty()) {
        (true, true) => Status::Converged,
        (true, false) => Status::Violation,
        (false, _) => Status::InconclusiveHorizon,
    };
    let converged = status == Status::Converged;
    Ok(Verdict { status, converged, t_f_observed: converged.then_some(t_f), violations, detections })
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LemmaReport {
    /// Timeout changes of correct nodes inside the trailing window.
    pub unstable_timeouts: Vec<(NodeId, NodeId, Time)>,
    /// Paths of the final graph a correct node never learned.
    pub missing_paths: Vec<(NodeId, NodeId, String)>,
    /// Stored paths that are not simple paths of the initial graph.
    pub foreign_paths: Vec<(NodeId, NodeId, String)>,
    /// (p, q, what is wrong) where p lacks perfect information about q.
    pub imperfect: Vec<(NodeId, NodeId, String)>,
}

impl LemmaReport {
    pub fn is_ok(&self) -> bool {
        self.unstable_timeouts.is_empty()
            && self.missing_paths.is_empty()
            && self.foreign_paths.is_empty()
            && self.imperfect.is_empty()
    }
}

/// Timeout stability, path-set sandwich and perfect information on the
/// final node states.
pub fn check_lemma_invariants(trace: &Trace, final_graph: &FinalGraph, stability_window: Time) -> LemmaReport {
    let mut report = LemmaReport::default();
    let window_start = trace.horizon - stability_window;
    for record in &trace.records {
        if let Record::Timeout { time, node, target, .. } = *record {
            if final_graph.is_correct(node) && time > window_start {
                report.unstable_timeouts.push((node, target, time));
            }
        }
    }

    let mut initial_paths: BTreeMap<(NodeId, NodeId), BTreeSet<Vec<NodeId>>> = BTreeMap::new();
    for state in &trace.final_states {
        let p = state.id();
        if !final_graph.is_correct(p) {
            continue;
        }
        let comp = final_graph.component_of(p).cloned().unwrap_or_default();
        let border = final_graph.crashed_border(&comp);
        for q in final_graph.universe() {
            let stored = state.paths().get(q);
            let allowed = initial_paths.entry((q, p)).or_insert_with(|| final_graph.initial.simple_paths(q, p));
            for path in stored {
                if !allowed.contains(path.nodes()) {
                    report.foreign_paths.push((p, q, path.to_string()));
                }
            }
            if comp.contains(&q) {
                for nodes in final_graph.graph.simple_paths(q, p) {
                    let path = Path::new(nodes);
                    if !stored.contains(&path) {
                        report.missing_paths.push((p, q, path.to_string()));
                    }
                }
            }

            let problem = if comp.contains(&q) {
                state.suspect().get(q).then_some("reachable node is suspected")
            } else if border.contains(&q) {
                (!state.suspect_local().get(q)).then_some("crashed border node not locally suspected")
            } else {
                (!state.suspect().get(q)).then_some("unreachable node is not suspected")
            };
            if let Some(problem) = problem {
                report.imperfect.push((p, q, problem.to_string()));
            }
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapViolation {
    pub from: NodeId,
    pub to: NodeId,
    pub gap: Time,
    pub bound: Time,
    pub at: Time,
}

/// Gaps between consecutive deliveries on every correct-to-correct channel,
/// counted among deliveries at or after `since`, against
/// `(r + 1) * T / rate + d`.
pub fn check_delivery_gaps(trace: &Trace, scenario: &Scenario, since: Time) -> Vec<GapViolation> {
    let mut last: BTreeMap<(NodeId, NodeId), Time> = BTreeMap::new();
    let mut out = Vec::new();
    for record in &trace.records {
        let Record::Deliver { time, node, target, .. } = *record else { continue };
        if time < since || !scenario.is_correct(node) || !scenario.is_correct(target) {
            continue;
        }
        if let Some(prev) = last.insert((node, target), time) {
            let bound = scenario.delivery_gap_bound(node, target).expect("deliveries use existing channels");
            let gap = time - prev;
            if gap > bound {
                out.push(GapViolation { from: node, to: target, gap, bound, at: time });
            }
        }
    }
    out
}

/// Runs the `(r, d)` conformance check on every channel of the trace.
pub fn check_channels(trace: &Trace, scenario: &Scenario) -> Vec<((NodeId, NodeId), ConformanceViolation)> {
    trace
        .channel_logs()
        .into_iter()
        .filter_map(|(key, log)| {
            let params = scenario.channel(key.0, key.1)?;
            conformance_check(&log, params).err().map(|v| (key, v))
        })
        .collect()
}

/// Structural sanity of a simulator trace: time order, silence of crashed
/// nodes, causality and bounded in-flight traffic from crashed senders.
pub fn check_trace_sanity(trace: &Trace, scenario: &Scenario) -> Vec<String> {
    let mut problems = Vec::new();
    let mut prev = Time::ZERO;
    let mut dispatched: BTreeMap<(NodeId, NodeId, Time), usize> = BTreeMap::new();
    let max_delay = scenario.max_channel_delay();
    for record in &trace.records {
        let time = record.time();
        if time < prev {
            problems.push(format!("time goes backwards at {time}"));
        }
        prev = time;
        let crashed_by = |node: NodeId| scenario.crash_time(node).is_some_and(|c| c <= time);
        match *record {
            Record::Send { node, .. } | Record::TimerFired { node, .. } if crashed_by(node) => {
                problems.push(format!("crashed node {node} active at {time}"));
            }
            Record::Dispatch { time, node, target, .. } => {
                *dispatched.entry((node, target, time)).or_default() += 1;
            }
            Record::Deliver { time, node, target, sent_at, .. } => {
                if sent_at > time {
                    problems.push(format!("delivery {node}->{target} at {time} precedes its send"));
                }
                match dispatched.get_mut(&(node, target, sent_at)) {
                    Some(count) if *count > 0 => *count -= 1,
                    _ => problems.push(format!("delivery {node}->{target} at {time} has no matching dispatch")),
                }
                if crashed_by(target) {
                    problems.push(format!("crashed node {target} received at {time}"));
                }
                if let Some(crash) = scenario.crash_time(node) {
                    if time > crash + max_delay {
                        problems.push(format!("delivery from crashed {node} at {time} after quiescence bound"));
                    }
                }
            }
            _ => {}
        }
    }
    problems
}

//! Deterministic discrete-event driver.
//!
//! Events are ordered by `(global time, sequence)`; sequence numbers are
//! handed out in scheduling order, so a scenario and its seed fully
//! determine the trace.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use thiserror::Error;

use crate::channel::{channel_seed, ChannelState, Outcome};
use crate::node::{ContractError, Effects, HeartbeatMessage, NodeState};
use crate::path::NodeId;
use crate::scenario::Scenario;
use crate::time::{ClockMap, Time};
use crate::trace::{digest_hex, Record, Trace};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("node {node} rejected an event: {source}")]
    Contract { node: NodeId, source: ContractError },
    #[error("replay needs message payloads; this trace was loaded from a file")]
    MissingPayload,
}

#[derive(Debug, Clone)]
enum EventKind {
    Tick { node: NodeId, tick: u64 },
    Delivery { src: NodeId, dst: NodeId, sent_at: Time, message: HeartbeatMessage },
    Timer { node: NodeId, neighbor: NodeId, tick: u64, generation: u64 },
    Crash { node: NodeId },
}

struct Event {
    time: Time,
    seq: u64,
    kind: EventKind,
}

// BinaryHeap is a max-heap: reverse so the earliest (time, seq) pops first.
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.time, self.seq).cmp(&(other.time, other.seq)).reverse()
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}

impl Eq for Event {}

struct Engine<'a> {
    scenario: &'a Scenario,
    clocks: ClockMap,
    nodes: Vec<NodeState>,
    channels: BTreeMap<(NodeId, NodeId), ChannelState>,
    /// Current timer generation per (node, neighbor); older timers are stale.
    timers: BTreeMap<(NodeId, NodeId), u64>,
    queue: BinaryHeap<Event>,
    next_seq: u64,
    records: Vec<Record>,
}

/// Runs `scenario` to its horizon.
pub fn run(scenario: &Scenario) -> Result<Trace, SimError> {
    let mut engine = Engine::new(scenario)?;
    engine.run()?;
    Ok(Trace {
        n: scenario.n(),
        seed: scenario.seed(),
        horizon: scenario.horizon(),
        records: engine.records,
        final_states: engine.nodes,
    })
}

impl<'a> Engine<'a> {
    fn new(scenario: &'a Scenario) -> Result<Self, SimError> {
        let n = scenario.n();
        let nodes = (0..n)
            .map(|i| {
                let id = NodeId::from(i);
                NodeState::new(id, scenario.neighbors(id), n, scenario.node_params(id).period)
                    .map_err(|source| SimError::Contract { node: id, source })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let channels = scenario
            .channels()
            .iter()
            .map(|(&(a, b), p)| ((a, b), ChannelState::new(p.clone(), channel_seed(scenario.seed(), a, b))))
            .collect();
        let mut engine = Engine {
            scenario,
            clocks: scenario.clock_map(),
            nodes,
            channels,
            timers: BTreeMap::new(),
            queue: BinaryHeap::new(),
            next_seq: 0,
            records: Vec::new(),
        };
        // Crashes go first so that they win ties with anything at the same instant.
        for crash in scenario.crashes() {
            engine.schedule(crash.time, EventKind::Crash { node: crash.node });
        }
        for i in 0..n {
            let node = NodeId::from(i);
            engine.schedule(engine.clocks.local_to_global(i, 0), EventKind::Tick { node, tick: 0 });
            let neighbors: Vec<NodeId> = engine.nodes[i].neighbors().iter().copied().collect();
            for q in neighbors {
                engine.arm_timer(node, q);
            }
        }
        Ok(engine)
    }

    fn schedule(&mut self, time: Time, kind: EventKind) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Event { time, seq, kind });
    }

    fn arm_timer(&mut self, node: NodeId, neighbor: NodeId) {
        let generation = self.timers.entry((node, neighbor)).or_insert(0);
        *generation += 1;
        let generation = *generation;
        if let Some(tick) = self.nodes[node.index()].timer_deadline(neighbor) {
            let time = self.clocks.local_to_global(node.index(), tick);
            self.schedule(time, EventKind::Timer { node, neighbor, tick, generation });
        }
    }

    fn run(&mut self) -> Result<(), SimError> {
        let horizon = self.scenario.horizon();
        while let Some(event) = self.queue.pop() {
            if event.time > horizon {
                break;
            }
            match event.kind {
                EventKind::Tick { node, tick } => self.on_tick(event.time, node, tick)?,
                EventKind::Delivery { src, dst, sent_at, message } => {
                    self.on_delivery(event.time, src, dst, sent_at, message)?
                }
                EventKind::Timer { node, neighbor, tick, generation } => {
                    self.on_timer(event.time, node, neighbor, tick, generation)?
                }
                EventKind::Crash { node } => {
                    self.nodes[node.index()].crash();
                    self.records.push(Record::Crash { time: event.time, node });
                }
            }
        }
        Ok(())
    }

    fn on_tick(&mut self, time: Time, node: NodeId, tick: u64) -> Result<(), SimError> {
        let state = &mut self.nodes[node.index()];
        if state.is_crashed() {
            return Ok(());
        }
        let contract = |source| SimError::Contract { node, source };
        state.set_clock(tick).map_err(contract)?;
        let outgoing = state.on_heartbeat_tick().map_err(contract)?;
        let period = state.period();
        let digest = outgoing.first().map(|(_, m)| digest_hex(m.digest())).unwrap_or_default();
        self.records.push(Record::Send {
            time,
            node,
            clock: tick,
            targets: outgoing.iter().map(|(dst, _)| *dst).collect(),
            digest,
        });
        for (dst, message) in outgoing {
            let channel = self.channels.get_mut(&(node, dst)).expect("every edge has two channels");
            let decision = channel.submit();
            match decision.outcome {
                Outcome::Deliver { delay } => {
                    self.records.push(Record::Dispatch {
                        time,
                        node,
                        target: dst,
                        seq: decision.seq,
                        privileged: decision.privileged,
                        delay,
                    });
                    self.schedule(time + delay, EventKind::Delivery { src: node, dst, sent_at: time, message });
                }
                Outcome::Drop => self.records.push(Record::Drop {
                    time,
                    node,
                    target: dst,
                    seq: decision.seq,
                    privileged: decision.privileged,
                }),
            }
        }
        let next = tick + period;
        self.schedule(self.clocks.local_to_global(node.index(), next), EventKind::Tick { node, tick: next });
        Ok(())
    }

    fn on_delivery(
        &mut self,
        time: Time,
        src: NodeId,
        dst: NodeId,
        sent_at: Time,
        message: HeartbeatMessage,
    ) -> Result<(), SimError> {
        let state = &mut self.nodes[dst.index()];
        if state.is_crashed() {
            return Ok(());
        }
        let contract = |source| SimError::Contract { node: dst, source };
        let clock = self.clocks.global_to_local(dst.index(), time);
        state.set_clock(clock).map_err(contract)?;
        let effects = state.on_receive(&message).map_err(contract)?;
        self.records.push(Record::Deliver {
            time,
            node: src,
            target: dst,
            sent_at,
            clock,
            digest: digest_hex(message.digest()),
            message: Some(message),
        });
        self.record_effects(time, dst, clock, effects);
        self.arm_timer(dst, src);
        Ok(())
    }

    fn on_timer(&mut self, time: Time, node: NodeId, neighbor: NodeId, tick: u64, generation: u64) -> Result<(), SimError> {
        if self.timers.get(&(node, neighbor)) != Some(&generation) {
            return Ok(());
        }
        let state = &mut self.nodes[node.index()];
        if state.is_crashed() {
            return Ok(());
        }
        let contract = |source| SimError::Contract { node, source };
        state.set_clock(tick).map_err(contract)?;
        let effects = state.on_timer_expiry(neighbor).map_err(contract)?;
        self.records.push(Record::TimerFired { time, node, target: neighbor, clock: tick });
        self.record_effects(time, node, tick, effects);
        Ok(())
    }

    fn record_effects(&mut self, time: Time, node: NodeId, clock: u64, effects: Effects) {
        if let Some(change) = effects.timeout {
            self.records.push(Record::Timeout { time, node, target: change.neighbor, old: change.old, new: change.new });
        }
        for change in effects.suspicion {
            self.records.push(Record::Suspicion { time, node, target: change.target, suspected: change.suspected, clock });
        }
    }
}

/// Rebuilds every node's final state by feeding the recorded inputs back
/// through fresh detectors.
pub fn replay(trace: &Trace, scenario: &Scenario) -> Result<Vec<NodeState>, SimError> {
    let n = scenario.n();
    let mut nodes = (0..n)
        .map(|i| {
            let id = NodeId::from(i);
            NodeState::new(id, scenario.neighbors(id), n, scenario.node_params(id).period)
                .map_err(|source| SimError::Contract { node: id, source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    for record in &trace.records {
        match record {
            Record::Send { node, clock, .. } => {
                let state = &mut nodes[node.index()];
                let contract = |source| SimError::Contract { node: *node, source };
                state.set_clock(*clock).map_err(contract)?;
                state.on_heartbeat_tick().map_err(contract)?;
            }
            Record::Deliver { target, clock, message, .. } => {
                let message = message.as_ref().ok_or(SimError::MissingPayload)?;
                let state = &mut nodes[target.index()];
                let contract = |source| SimError::Contract { node: *target, source };
                state.set_clock(*clock).map_err(contract)?;
                state.on_receive(message).map_err(contract)?;
            }
            Record::TimerFired { node, target, clock, .. } => {
                let state = &mut nodes[node.index()];
                let contract = |source| SimError::Contract { node: *node, source };
                state.set_clock(*clock).map_err(contract)?;
                state.on_timer_expiry(*target).map_err(contract)?;
            }
            Record::Crash { node, .. } => nodes[node.index()].crash(),
            _ => {}
        }
    }
    Ok(nodes)
}

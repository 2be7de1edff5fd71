//! Execution traces and their line-delimited JSON encoding.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{DeliveryDecision, Outcome};
use crate::node::{HeartbeatMessage, NodeState};
use crate::path::NodeId;
use crate::time::Time;

/// One trace entry. Field order is part of the file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Record {
    Send { time: Time, node: NodeId, clock: u64, targets: Vec<NodeId>, digest: String },
    /// Channel accepted the message for delivery after `delay`.
    Dispatch { time: Time, node: NodeId, target: NodeId, seq: u64, privileged: bool, delay: Time },
    /// Channel lost the message.
    Drop { time: Time, node: NodeId, target: NodeId, seq: u64, privileged: bool },
    /// `target` received a message `node` sent at `sent_at`.
    Deliver {
        time: Time,
        node: NodeId,
        target: NodeId,
        sent_at: Time,
        clock: u64,
        digest: String,
        #[serde(skip)]
        message: Option<HeartbeatMessage>,
    },
    Suspicion { time: Time, node: NodeId, target: NodeId, suspected: bool, clock: u64 },
    Timeout { time: Time, node: NodeId, target: NodeId, old: u64, new: u64 },
    TimerFired { time: Time, node: NodeId, target: NodeId, clock: u64 },
    Crash { time: Time, node: NodeId },
}

impl Record {
    pub fn time(&self) -> Time {
        match self {
            Record::Send { time, .. }
            | Record::Dispatch { time, .. }
            | Record::Drop { time, .. }
            | Record::Deliver { time, .. }
            | Record::Suspicion { time, .. }
            | Record::Timeout { time, .. }
            | Record::TimerFired { time, .. }
            | Record::Crash { time, .. } => *time,
        }
    }

    /// The node the record is about (the acting node for sends and drops).
    pub fn node(&self) -> NodeId {
        match self {
            Record::Send { node, .. }
            | Record::Dispatch { node, .. }
            | Record::Drop { node, .. }
            | Record::Deliver { node, .. }
            | Record::Suspicion { node, .. }
            | Record::Timeout { node, .. }
            | Record::TimerFired { node, .. }
            | Record::Crash { node, .. } => *node,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub n: usize,
    pub seed: u64,
    pub horizon: Time,
    pub records: Vec<Record>,
    pub final_states: Vec<NodeState>,
}

#[derive(Debug, Error)]
pub enum TraceIoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("trace has no header line")]
    MissingHeader,
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Meta {
    Header { n: usize, seed: u64, horizon: Time },
    FinalState { state: NodeState },
}

#[derive(Deserialize)]
struct HeaderLine {
    n: usize,
    seed: u64,
    horizon: Time,
}

#[derive(Deserialize)]
struct FinalStateLine {
    state: NodeState,
}

#[derive(Deserialize)]
struct Kind<'a> {
    #[serde(borrow)]
    kind: &'a str,
}

impl Trace {
    /// Per-channel decision logs in submission order.
    pub fn channel_logs(&self) -> BTreeMap<(NodeId, NodeId), Vec<DeliveryDecision>> {
        let mut logs: BTreeMap<(NodeId, NodeId), Vec<DeliveryDecision>> = BTreeMap::new();
        for record in &self.records {
            let (key, decision) = match *record {
                Record::Dispatch { node, target, seq, privileged, delay, .. } => {
                    ((node, target), DeliveryDecision { seq, privileged, outcome: Outcome::Deliver { delay } })
                }
                Record::Drop { node, target, seq, privileged, .. } => {
                    ((node, target), DeliveryDecision { seq, privileged, outcome: Outcome::Drop })
                }
                _ => continue,
            };
            logs.entry(key).or_default().push(decision);
        }
        logs
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        let header = Meta::Header { n: self.n, seed: self.seed, horizon: self.horizon };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for record in &self.records {
            serde_json::to_writer(&mut out, record)?;
            out.write_all(b"\n")?;
        }
        for state in &self.final_states {
            serde_json::to_writer(&mut out, &Meta::FinalState { state: state.clone() })?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory cannot fail");
        buf
    }

    /// Reads a trace written by [`Trace::write_jsonl`]. Message payloads are
    /// not part of the file, so `Deliver` records come back without them.
    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Trace, TraceIoError> {
        let mut header = None;
        let mut records = Vec::new();
        let mut final_states = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let json = |source| TraceIoError::Json { line: i + 1, source };
            // Dispatch on the tag first: buffering through an untagged enum
            // loses integer map keys in the final states.
            let kind = serde_json::from_str::<Kind>(&line).map_err(json)?.kind;
            if kind == "header" {
                let h: HeaderLine = serde_json::from_str(&line).map_err(json)?;
                header = Some((h.n, h.seed, h.horizon));
            } else if kind == "final_state" {
                final_states.push(serde_json::from_str::<FinalStateLine>(&line).map_err(json)?.state);
            } else {
                records.push(serde_json::from_str(&line).map_err(json)?);
            }
        }
        let (n, seed, horizon) = header.ok_or(TraceIoError::MissingHeader)?;
        Ok(Trace { n, seed, horizon, records, final_states })
    }
}

pub fn digest_hex(digest: u64) -> String {
    format!("{digest:016x}")
}

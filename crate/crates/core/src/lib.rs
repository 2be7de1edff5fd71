//! Eventually perfect failure detection for partitionable networks.
//!
//! Nodes exchange heartbeats carrying their local suspicion vector and every
//! path their heartbeats are known to travel. Over lossy, reordering ADD
//! channels each correct node eventually suspects exactly the nodes that are
//! crashed or cut off from it.
//!
//! - [`node`]: the per-node detector state machine.
//! - [`channel`]: the ADD channel model and its conformance check.
//! - [`sim`]: a deterministic discrete-event simulator driving both.
//! - [`oracle`]: ground truth and trace checks.
//! - [`scenario`]: simulation inputs and their file format.

pub mod channel;
pub mod graph;
pub mod node;
pub mod oracle;
pub mod path;
pub mod scenario;
pub mod sim;
pub mod time;
pub mod trace;

pub use channel::{conformance_check, ChannelParams, ChannelState, DeliveryDecision, Outcome};
pub use graph::NetworkGraph;
pub use node::{shortest_valid_length, ContractError, HeartbeatMessage, Hops, NodeState, SuspectVector};
pub use oracle::{check_convergence, check_lemma_invariants, final_graph, FinalGraph, Status, Verdict};
pub use path::{NodeId, Path, PathSetArray};
pub use scenario::{load_scenario, Scenario, ScenarioBuilder, ScenarioError, ScenarioTemplate};
pub use sim::{replay, run};
pub use time::{ClockMap, Rate, Time};
pub use trace::{Record, Trace};

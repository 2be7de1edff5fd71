//! Simulation scenarios and their TOML file format.
//!
//! A scenario file either spells out a topology (`n`, `edges`, optional
//! per-node and per-channel overrides, crashes) or carries a `[generate]`
//! table, in which case it is a template and the topology, crash schedule
//! and channel parameters are drawn from the seed.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path as FsPath;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelParams, ChannelParamsError};
use crate::graph::NetworkGraph;
use crate::path::NodeId;
use crate::time::{ClockMap, Rate, Rational, Time};

pub const DEFAULT_PERIOD: u64 = 5;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("scenario must have at least one node")]
    NoNodes,
    #[error("node id {0} is out of range")]
    UnknownNode(u32),
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("initial graph disconnected")]
    Disconnected,
    #[error("node {0}: heartbeat period must be at least one tick")]
    ZeroPeriod(NodeId),
    #[error("node {0}: clock rate must be positive")]
    NonPositiveRate(NodeId),
    #[error("node {0}: phase must be non-negative")]
    NegativePhase(NodeId),
    #[error("channel {from}->{to}: {source}")]
    Channel { from: NodeId, to: NodeId, source: ChannelParamsError },
    #[error("channel override {from}->{to} has no matching edge")]
    ChannelWithoutEdge { from: NodeId, to: NodeId },
    #[error("node {0} appears more than once in the crash schedule")]
    DuplicateCrash(NodeId),
    #[error("node {node}: crash time {time} is negative")]
    NegativeCrashTime { node: NodeId, time: Time },
    #[error("node {node}: crash time {time} is not before the horizon {horizon}")]
    CrashAfterHorizon { node: NodeId, time: Time, horizon: Time },
    #[error("horizon must be positive")]
    NonPositiveHorizon,
    #[error("stability window must be positive")]
    NonPositiveWindow,
    #[error("template: {0}")]
    Template(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeParams {
    /// Local ticks between heartbeats.
    pub period: u64,
    pub rate: Rate,
    pub phase: Time,
}

impl Default for NodeParams {
    fn default() -> Self {
        Self { period: DEFAULT_PERIOD, rate: Rate::ONE, phase: Time::ZERO }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Crash {
    pub node: NodeId,
    pub time: Time,
}

/// A validated, fully specified simulation input.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    n: usize,
    edges: Vec<(NodeId, NodeId)>,
    nodes: Vec<NodeParams>,
    channels: BTreeMap<(NodeId, NodeId), ChannelParams>,
    crashes: Vec<Crash>,
    seed: u64,
    horizon: Time,
    stability_window: Time,
    /// Whether the window was given explicitly (kept for serialization).
    explicit_window: bool,
}

/// Unvalidated scenario parts, used to build a [`Scenario`].
#[derive(Debug, Clone)]
pub struct ScenarioBuilder {
    pub n: usize,
    pub edges: Vec<(NodeId, NodeId)>,
    pub nodes: Vec<NodeParams>,
    /// Parameters for both directions of every edge unless overridden.
    pub channel_defaults: ChannelParams,
    pub channel_overrides: BTreeMap<(NodeId, NodeId), ChannelParams>,
    pub crashes: Vec<Crash>,
    pub seed: u64,
    pub horizon: Time,
    pub stability_window: Option<Time>,
}

impl ScenarioBuilder {
    pub fn new(n: usize, edges: &[(u32, u32)]) -> Self {
        Self {
            n,
            edges: edges.iter().map(|&(a, b)| (NodeId(a), NodeId(b))).collect(),
            nodes: vec![NodeParams::default(); n],
            channel_defaults: ChannelParams::default(),
            channel_overrides: BTreeMap::new(),
            crashes: Vec::new(),
            seed: 0,
            horizon: Time::from_integer(1000),
            stability_window: None,
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn horizon(mut self, horizon: Time) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn stability_window(mut self, window: Time) -> Self {
        self.stability_window = Some(window);
        self
    }

    pub fn channels(mut self, params: ChannelParams) -> Self {
        self.channel_defaults = params;
        self
    }

    pub fn channel(mut self, from: u32, to: u32, params: ChannelParams) -> Self {
        self.channel_overrides.insert((NodeId(from), NodeId(to)), params);
        self
    }

    pub fn all_nodes(mut self, params: NodeParams) -> Self {
        self.nodes = vec![params; self.n];
        self
    }

    pub fn node(mut self, id: u32, params: NodeParams) -> Self {
        self.nodes[id as usize] = params;
        self
    }

    pub fn crash(mut self, node: u32, time: Time) -> Self {
        self.crashes.push(Crash { node: NodeId(node), time });
        self
    }

    pub fn build(self) -> Result<Scenario, ScenarioError> {
        let n = self.n;
        if n == 0 {
            return Err(ScenarioError::NoNodes);
        }
        let check = |id: NodeId| if id.index() < n { Ok(id) } else { Err(ScenarioError::UnknownNode(id.0)) };
        let mut edges = BTreeSet::new();
        for &(a, b) in &self.edges {
            check(a)?;
            check(b)?;
            if a == b {
                return Err(ScenarioError::SelfLoop(a));
            }
            edges.insert((a.min(b), a.max(b)));
        }
        let edges: Vec<_> = edges.into_iter().collect();
        if !NetworkGraph::new(n, &edges).is_connected() {
            return Err(ScenarioError::Disconnected);
        }
        if self.nodes.len() != n {
            return Err(ScenarioError::UnknownNode(self.nodes.len() as u32));
        }
        for (i, params) in self.nodes.iter().enumerate() {
            let id = NodeId::from(i);
            if params.period == 0 {
                return Err(ScenarioError::ZeroPeriod(id));
            }
            if !params.rate.is_positive() {
                return Err(ScenarioError::NonPositiveRate(id));
            }
            if params.phase.is_negative() {
                return Err(ScenarioError::NegativePhase(id));
            }
        }

        let mut channels = BTreeMap::new();
        for &(a, b) in &edges {
            for (from, to) in [(a, b), (b, a)] {
                let params = self.channel_overrides.get(&(from, to)).unwrap_or(&self.channel_defaults).clone();
                params.validate().map_err(|source| ScenarioError::Channel { from, to, source })?;
                channels.insert((from, to), params);
            }
        }
        if let Some(&(from, to)) = self.channel_overrides.keys().find(|k| !channels.contains_key(k)) {
            return Err(ScenarioError::ChannelWithoutEdge { from, to });
        }

        if !self.horizon.is_positive() {
            return Err(ScenarioError::NonPositiveHorizon);
        }
        let mut seen = BTreeSet::new();
        for crash in &self.crashes {
            check(crash.node)?;
            if !seen.insert(crash.node) {
                return Err(ScenarioError::DuplicateCrash(crash.node));
            }
            if crash.time.is_negative() {
                return Err(ScenarioError::NegativeCrashTime { node: crash.node, time: crash.time });
            }
            if crash.time >= self.horizon {
                return Err(ScenarioError::CrashAfterHorizon { node: crash.node, time: crash.time, horizon: self.horizon });
            }
        }
        let mut crashes = self.crashes;
        crashes.sort_by_key(|c| (c.time, c.node));

        let mut scenario = Scenario {
            n,
            edges,
            nodes: self.nodes,
            channels,
            crashes,
            seed: self.seed,
            horizon: self.horizon,
            stability_window: Time::ZERO,
            explicit_window: self.stability_window.is_some(),
        };
        scenario.stability_window = match self.stability_window {
            Some(w) => w,
            None => scenario.default_stability_window(),
        };
        if !scenario.stability_window.is_positive() {
            return Err(ScenarioError::NonPositiveWindow);
        }
        Ok(scenario)
    }
}

impl Scenario {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn node_params(&self, node: NodeId) -> &NodeParams {
        &self.nodes[node.index()]
    }

    pub fn channels(&self) -> &BTreeMap<(NodeId, NodeId), ChannelParams> {
        &self.channels
    }

    pub fn channel(&self, from: NodeId, to: NodeId) -> Option<&ChannelParams> {
        self.channels.get(&(from, to))
    }

    pub fn crashes(&self) -> &[Crash] {
        &self.crashes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn horizon(&self) -> Time {
        self.horizon
    }

    pub fn stability_window(&self) -> Time {
        self.stability_window
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Replaces the horizon; crashes must still precede it.
    pub fn with_horizon(mut self, horizon: Time) -> Result<Self, ScenarioError> {
        if !horizon.is_positive() {
            return Err(ScenarioError::NonPositiveHorizon);
        }
        if let Some(c) = self.crashes.iter().find(|c| c.time >= horizon) {
            return Err(ScenarioError::CrashAfterHorizon { node: c.node, time: c.time, horizon });
        }
        self.horizon = horizon;
        Ok(self)
    }

    pub fn initial_graph(&self) -> NetworkGraph {
        NetworkGraph::new(self.n, &self.edges)
    }

    pub fn neighbors(&self, node: NodeId) -> BTreeSet<NodeId> {
        self.edges
            .iter()
            .filter_map(|&(a, b)| if a == node { Some(b) } else if b == node { Some(a) } else { None })
            .collect()
    }

    pub fn crash_time(&self, node: NodeId) -> Option<Time> {
        self.crashes.iter().find(|c| c.node == node).map(|c| c.time)
    }

    pub fn crashed_nodes(&self) -> BTreeSet<NodeId> {
        self.crashes.iter().map(|c| c.node).collect()
    }

    pub fn is_correct(&self, node: NodeId) -> bool {
        self.crash_time(node).is_none()
    }

    pub fn correct_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.n).map(NodeId::from).filter(|&p| self.is_correct(p))
    }

    /// Time of the last crash, zero without crashes.
    pub fn t_star(&self) -> Time {
        self.crashes.iter().map(|c| c.time).max().unwrap_or(Time::ZERO)
    }

    pub fn clock_map(&self) -> ClockMap {
        ClockMap::new(self.nodes.iter().map(|p| p.rate).collect(), self.nodes.iter().map(|p| p.phase).collect())
    }

    /// Upper bound on the gap between deliveries on `from -> to` while the
    /// sender is alive: `(r + 1) * T / rate + d` in global time.
    pub fn delivery_gap_bound(&self, from: NodeId, to: NodeId) -> Option<Time> {
        let ch = self.channel(from, to)?;
        let sender = self.node_params(from);
        let period = Time::from_integer(sender.period as i128) / sender.rate.as_rational();
        Some(period * Rational::from_integer(ch.r as i128 + 1) + ch.d)
    }

    /// Five times the largest per-channel delivery gap bound, or five
    /// heartbeat periods of the slowest node when there are no channels.
    pub fn default_stability_window(&self) -> Time {
        let widest = self
            .channels
            .keys()
            .filter_map(|&(a, b)| self.delivery_gap_bound(a, b))
            .max()
            .or_else(|| {
                self.nodes
                    .iter()
                    .map(|p| Time::from_integer(p.period as i128) / p.rate.as_rational())
                    .max()
            })
            .unwrap_or(Time::from_integer(1));
        widest * Rational::from_integer(5)
    }

    /// Longest delay any channel can impose.
    pub fn max_channel_delay(&self) -> Time {
        self.channels.values().map(ChannelParams::max_delay).max().unwrap_or(Time::ZERO)
    }

    pub fn to_toml(&self) -> String {
        let file = ScenarioFile::from(self);
        toml::to_string(&file).expect("scenario serializes")
    }
}

// ---------------------------------------------------------------------------
// File format

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    pub horizon: Time,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability_window: Option<Time>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edges: Vec<[u32; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_defaults: Option<NodeFields>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel_defaults: Option<ChannelFields>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nodes: Vec<NodeOverride>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub channels: Vec<ChannelOverride>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub crashes: Vec<Crash>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<GenerateSpec>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeFields {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<Rate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<Time>,
}

impl NodeFields {
    fn apply(&self, base: &NodeParams) -> NodeParams {
        NodeParams {
            period: self.period.unwrap_or(base.period),
            rate: self.rate.unwrap_or(base.rate),
            phase: self.phase.unwrap_or(base.phase),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeOverride {
    pub id: u32,
    #[serde(flatten)]
    pub fields: NodeFields,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelFields {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Time>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drop_probability: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_priv: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unprivileged_delay_max: Option<Time>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enforce_bound: Option<bool>,
}

impl ChannelFields {
    fn apply(&self, base: &ChannelParams) -> ChannelParams {
        ChannelParams {
            d: self.d.unwrap_or(base.d),
            r: self.r.unwrap_or(base.r),
            drop_probability: self.drop_probability.unwrap_or(base.drop_probability),
            p_priv: self.p_priv.unwrap_or(base.p_priv),
            unprivileged_delay_max: self.unprivileged_delay_max.unwrap_or(base.unprivileged_delay_max),
            enforce_bound: self.enforce_bound.unwrap_or(base.enforce_bound),
        }
    }

    fn full(p: &ChannelParams) -> Self {
        Self {
            d: Some(p.d),
            r: Some(p.r),
            drop_probability: Some(p.drop_probability),
            p_priv: Some(p.p_priv),
            unprivileged_delay_max: Some(p.unprivileged_delay_max),
            enforce_bound: (!p.enforce_bound).then_some(false),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelOverride {
    pub from: u32,
    pub to: u32,
    /// Apply to the reverse direction as well.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub both: bool,
    #[serde(flatten)]
    pub fields: ChannelFields,
}

/// Random-scenario generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSpec {
    /// Inclusive range of node counts.
    pub nodes: [usize; 2],
    /// Probability of each non-tree edge.
    #[serde(default = "GenerateSpec::default_edge_probability")]
    pub edge_probability: f64,
    /// Probability that any given node crashes; at least one node survives.
    #[serde(default = "GenerateSpec::default_crash_probability")]
    pub crash_probability: f64,
    /// Crash times are drawn from `[0, crash_before)`.
    pub crash_before: Time,
    /// Choices for `r`, drawn per channel.
    #[serde(default = "GenerateSpec::default_r")]
    pub r: Vec<u32>,
    /// Choices for `drop_probability`, drawn per channel.
    #[serde(default = "GenerateSpec::default_drop")]
    pub drop_probability: Vec<f64>,
    /// Choices for the heartbeat period, drawn per node.
    #[serde(default = "GenerateSpec::default_periods")]
    pub periods: Vec<u64>,
    /// Clock rates are drawn on a quarter grid within this range.
    #[serde(default = "GenerateSpec::default_rates")]
    pub rates: [Rate; 2],
}

impl GenerateSpec {
    fn default_edge_probability() -> f64 {
        0.3
    }
    fn default_crash_probability() -> f64 {
        0.3
    }
    fn default_r() -> Vec<u32> {
        vec![0, 1, 2, 3]
    }
    fn default_drop() -> Vec<f64> {
        vec![0.0, 0.5, 0.9]
    }
    fn default_periods() -> Vec<u64> {
        vec![DEFAULT_PERIOD]
    }
    fn default_rates() -> [Rate; 2] {
        [Rate::new(1, 2), Rate::new(2, 1)]
    }

    fn check(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::Template(m.to_string()));
        if self.nodes[0] == 0 || self.nodes[0] > self.nodes[1] {
            return bad("nodes must be a non-empty range [min, max] with min >= 1");
        }
        if self.r.is_empty() || self.drop_probability.is_empty() || self.periods.is_empty() {
            return bad("choice lists must not be empty");
        }
        if !self.crash_before.is_positive() {
            return bad("crash_before must be positive");
        }
        if !self.rates[0].is_positive() || self.rates[0] > self.rates[1] {
            return bad("rates must be a positive range [min, max]");
        }
        Ok(())
    }
}

/// A loaded scenario file: either concrete, or a generator template.
#[derive(Debug, Clone)]
pub enum ScenarioTemplate {
    Fixed(Scenario),
    Random { file: Box<ScenarioFile>, spec: GenerateSpec },
}

impl ScenarioTemplate {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = toml::from_str(text)?;
        match file.generate.clone() {
            Some(spec) => {
                spec.check()?;
                if file.n.is_some() || !file.edges.is_empty() || !file.crashes.is_empty() {
                    return Err(ScenarioError::Template("a [generate] template must not list n, edges or crashes".into()));
                }
                // Surface default-field errors now rather than per seed.
                instantiate(&file, &spec, file.seed)?;
                Ok(ScenarioTemplate::Random { file: Box::new(file), spec })
            }
            None => Ok(ScenarioTemplate::Fixed(file.into_scenario()?)),
        }
    }

    pub fn load(path: impl AsRef<FsPath>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    /// The scenario for `seed`: the fixed scenario reseeded, or a fresh draw.
    pub fn instantiate(&self, seed: u64) -> Result<Scenario, ScenarioError> {
        match self {
            ScenarioTemplate::Fixed(s) => Ok(s.clone().with_seed(seed)),
            ScenarioTemplate::Random { file, spec } => instantiate(file, spec, seed),
        }
    }

    /// The scenario for the seed written in the file.
    pub fn scenario(&self) -> Result<Scenario, ScenarioError> {
        match self {
            ScenarioTemplate::Fixed(s) => Ok(s.clone()),
            ScenarioTemplate::Random { file, spec } => instantiate(file, spec, file.seed),
        }
    }
}

/// Reads and validates a scenario file; templates are drawn at their own seed.
pub fn load_scenario(path: impl AsRef<FsPath>) -> Result<Scenario, ScenarioError> {
    ScenarioTemplate::load(path)?.scenario()
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    ScenarioTemplate::parse(text)?.scenario()
}

impl ScenarioFile {
    fn base_node(&self) -> NodeParams {
        self.node_defaults.as_ref().map_or_else(NodeParams::default, |f| f.apply(&NodeParams::default()))
    }

    fn base_channel(&self) -> ChannelParams {
        self.channel_defaults.as_ref().map_or_else(ChannelParams::default, |f| f.apply(&ChannelParams::default()))
    }

    pub fn into_scenario(&self) -> Result<Scenario, ScenarioError> {
        let n = self.n.ok_or_else(|| ScenarioError::Template("missing n".into()))?;
        let edges: Vec<(u32, u32)> = self.edges.iter().map(|e| (e[0], e[1])).collect();
        let mut builder = ScenarioBuilder::new(n, &edges).seed(self.seed).horizon(self.horizon);
        builder.stability_window = self.stability_window;
        let base_node = self.base_node();
        builder.nodes = vec![base_node.clone(); n];
        for o in &self.nodes {
            let slot = builder.nodes.get_mut(o.id as usize).ok_or(ScenarioError::UnknownNode(o.id))?;
            *slot = o.fields.apply(&base_node);
        }
        let base_channel = self.base_channel();
        builder.channel_defaults = base_channel.clone();
        for o in &self.channels {
            let params = o.fields.apply(&base_channel);
            builder.channel_overrides.insert((NodeId(o.from), NodeId(o.to)), params.clone());
            if o.both {
                builder.channel_overrides.insert((NodeId(o.to), NodeId(o.from)), params);
            }
        }
        builder.crashes = self.crashes.clone();
        builder.build()
    }
}

impl From<&Scenario> for ScenarioFile {
    fn from(s: &Scenario) -> Self {
        ScenarioFile {
            n: Some(s.n),
            seed: s.seed,
            horizon: s.horizon,
            stability_window: s.explicit_window.then_some(s.stability_window),
            edges: s.edges.iter().map(|&(a, b)| [a.0, b.0]).collect(),
            node_defaults: None,
            channel_defaults: None,
            nodes: s
                .nodes
                .iter()
                .enumerate()
                .map(|(i, p)| NodeOverride {
                    id: i as u32,
                    fields: NodeFields { period: Some(p.period), rate: Some(p.rate), phase: Some(p.phase) },
                })
                .collect(),
            channels: s
                .channels
                .iter()
                .map(|(&(from, to), p)| ChannelOverride { from: from.0, to: to.0, both: false, fields: ChannelFields::full(p) })
                .collect(),
            crashes: s.crashes.clone(),
            generate: None,
        }
    }
}

fn instantiate(file: &ScenarioFile, spec: &GenerateSpec, seed: u64) -> Result<Scenario, ScenarioError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6a09_e667_f3bc_c908);
    let n = rng.gen_range(spec.nodes[0]..=spec.nodes[1]);

    // Random spanning tree over a shuffled order, then extra edges.
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.shuffle(&mut rng);
    let mut edges = BTreeSet::new();
    for i in 1..n {
        let parent = order[rng.gen_range(0..i)];
        let child = order[i];
        edges.insert((parent.min(child), parent.max(child)));
    }
    for a in 0..n as u32 {
        for b in a + 1..n as u32 {
            if !edges.contains(&(a, b)) && rng.gen_bool(spec.edge_probability) {
                edges.insert((a, b));
            }
        }
    }
    let edges: Vec<(u32, u32)> = edges.into_iter().collect();

    let base_node = file.base_node();
    let (lo, hi) = (spec.rates[0].as_rational() * 4, spec.rates[1].as_rational() * 4);
    let (lo, hi) = (lo.ceil().to_integer(), hi.floor().to_integer());
    let nodes: Vec<NodeParams> = (0..n)
        .map(|_| NodeParams {
            period: *spec.periods.choose(&mut rng).expect("non-empty"),
            rate: if lo <= hi { Rate::new(rng.gen_range(lo..=hi), 4) } else { spec.rates[0] },
            phase: Time::new(rng.gen_range(0..=8), 4) + base_node.phase,
        })
        .collect();

    let base_channel = file.base_channel();
    let mut builder = ScenarioBuilder::new(n, &edges).seed(seed).horizon(file.horizon);
    builder.stability_window = file.stability_window;
    builder.nodes = nodes;
    builder.channel_defaults = base_channel.clone();
    for &(a, b) in &edges {
        for (from, to) in [(a, b), (b, a)] {
            let params = ChannelParams {
                r: *spec.r.choose(&mut rng).expect("non-empty"),
                drop_probability: *spec.drop_probability.choose(&mut rng).expect("non-empty"),
                ..base_channel.clone()
            };
            builder.channel_overrides.insert((NodeId(from), NodeId(to)), params);
        }
    }

    let mut crashed: Vec<u32> = (0..n as u32).filter(|_| rng.gen_bool(spec.crash_probability)).collect();
    if crashed.len() == n {
        let keep = rng.gen_range(0..n);
        crashed.remove(keep);
    }
    let slots = (spec.crash_before.as_rational() * 4).ceil().to_integer().max(1);
    for node in crashed {
        let time = Time::new(rng.gen_range(0..slots), 4);
        builder.crashes.push(Crash { node: NodeId(node), time });
    }
    builder.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
n = 2
horizon = "100"
edges = [[0, 1]]
"#;

    #[test]
    fn minimal_file_gets_defaults() {
        let s = parse_scenario(MINIMAL).unwrap();
        assert_eq!(s.n(), 2);
        assert_eq!(s.node_params(NodeId(0)).period, 5);
        let ch = s.channel(NodeId(0), NodeId(1)).unwrap();
        assert_eq!(ch.d, Time::from_integer(1));
        assert_eq!(ch.r, 2);
        assert_eq!(s.channel(NodeId(1), NodeId(0)), Some(ch));
        // 5 * ((2 + 1) * 5 / 1 + 1)
        assert_eq!(s.stability_window(), Time::from_integer(80));
    }

    #[test]
    fn crash_at_or_after_horizon_is_rejected() {
        let text = format!("{MINIMAL}\n[[crashes]]\nnode = 1\ntime = \"100\"\n");
        assert!(matches!(parse_scenario(&text), Err(ScenarioError::CrashAfterHorizon { .. })));
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        let err = parse_scenario("n = 3\nhorizon = \"10\"\nedges = [[0, 1]]\n").unwrap_err();
        assert_eq!(err.to_string(), "initial graph disconnected");
    }

    #[test]
    fn duplicate_crash_is_rejected() {
        let text = format!("{MINIMAL}\n[[crashes]]\nnode = 1\ntime = 3\n[[crashes]]\nnode = 1\ntime = 4\n");
        assert!(matches!(parse_scenario(&text), Err(ScenarioError::DuplicateCrash(NodeId(1)))));
    }

    #[test]
    fn zero_rate_is_rejected() {
        let text = format!("{MINIMAL}\n[[nodes]]\nid = 0\nrate = \"0\"\n");
        assert!(matches!(parse_scenario(&text), Err(ScenarioError::NonPositiveRate(NodeId(0)))));
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = parse_scenario("n = 2\nhorizon = \"10\"\nedges = [[0, 1]\n").unwrap_err();
        assert!(matches!(err, ScenarioError::Parse(_)));
        assert!(err.to_string().contains("line"), "{err}");
        let err = parse_scenario("n = 2\nhorizon = \"10\"\nedgez = []\n").unwrap_err();
        assert!(err.to_string().contains("edgez"), "{err}");
    }

    #[test]
    fn per_direction_channel_override() {
        let text = format!("{MINIMAL}\n[[channels]]\nfrom = 1\nto = 0\nr = 0\nd = \"2.5\"\nunprivileged_delay_max = \"6\"\n");
        let s = parse_scenario(&text).unwrap();
        assert_eq!(s.channel(NodeId(1), NodeId(0)).unwrap().r, 0);
        assert_eq!(s.channel(NodeId(1), NodeId(0)).unwrap().d, Time::new(5, 2));
        assert_eq!(s.channel(NodeId(0), NodeId(1)).unwrap().r, 2);
    }

    #[test]
    fn override_for_missing_edge_is_rejected() {
        let text = "n = 3\nhorizon = \"10\"\nedges = [[0, 1], [1, 2]]\n[[channels]]\nfrom = 0\nto = 2\nr = 1\n";
        assert!(matches!(parse_scenario(text), Err(ScenarioError::ChannelWithoutEdge { .. })));
    }

    #[test]
    fn serialization_round_trips() {
        let text = format!(
            "{MINIMAL}\nstability_window = \"40\"\n[[nodes]]\nid = 1\nperiod = 3\nrate = \"3/2\"\nphase = \"0.25\"\n[[crashes]]\nnode = 1\ntime = \"12.5\"\n"
        );
        let s = parse_scenario(&text).unwrap();
        assert_eq!(parse_scenario(&s.to_toml()).unwrap(), s);
    }

    #[test]
    fn templates_draw_valid_scenarios() {
        let text = r#"
horizon = "3000"
[generate]
nodes = [3, 7]
crash_before = "200"
"#;
        let t = ScenarioTemplate::parse(text).unwrap();
        for seed in 0..50 {
            let s = t.instantiate(seed).unwrap();
            assert!((3..=7).contains(&s.n()));
            assert!(s.correct_nodes().count() >= 1);
            assert!(s.crashes().iter().all(|c| c.time < Time::from_integer(200)));
            for p in s.channels().values() {
                assert!(p.r <= 3);
            }
            for i in 0..s.n() {
                let rate = s.node_params(NodeId::from(i)).rate;
                assert!(rate >= Rate::new(1, 2) && rate <= Rate::new(2, 1));
            }
            assert_eq!(t.instantiate(seed).unwrap(), s);
        }
    }
}

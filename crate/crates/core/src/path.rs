//! Node identifiers, simple paths and the per-node path-set array.

use std::collections::BTreeSet;
use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Dense node identifier in `0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for NodeId {
    fn from(v: usize) -> Self {
        NodeId(v as u32)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Sequence of node ids a heartbeat travelled along, origin first.
///
/// Paths order by edge count first, then lexicographically, so iterating a
/// `BTreeSet<Path>` visits shorter paths before longer ones.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Path(Vec<NodeId>);

impl Path {
    pub fn new(nodes: Vec<NodeId>) -> Self {
        assert!(!nodes.is_empty(), "a path has at least one node");
        Path(nodes)
    }

    pub fn singleton(node: NodeId) -> Self {
        Path(vec![node])
    }

    pub fn from_ids(ids: &[u32]) -> Self {
        Path::new(ids.iter().copied().map(NodeId).collect())
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.0
    }

    /// Length in edges; a singleton has length 0.
    pub fn len(&self) -> usize {
        self.0.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn first(&self) -> NodeId {
        self.0[0]
    }

    pub fn last(&self) -> NodeId {
        self.0[self.0.len() - 1]
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.0.contains(&node)
    }

    pub fn extended(&self, node: NodeId) -> Path {
        let mut nodes = Vec::with_capacity(self.0.len() + 1);
        nodes.extend_from_slice(&self.0);
        nodes.push(node);
        Path(nodes)
    }

    pub fn is_simple(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.0.iter().all(|id| seen.insert(*id))
    }
}

impl Ord for Path {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.len().cmp(&other.0.len()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Path {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, id) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("·")?;
            }
            write!(f, "{id}")?;
        }
        Ok(())
    }
}

/// One set of paths per origin node.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PathSetArray(Vec<BTreeSet<Path>>);

impl PathSetArray {
    pub fn empty(n: usize) -> Self {
        PathSetArray(vec![BTreeSet::new(); n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, origin: NodeId) -> &BTreeSet<Path> {
        &self.0[origin.index()]
    }

    /// Returns true if the path was not already present.
    pub fn insert(&mut self, origin: NodeId, path: Path) -> bool {
        self.0[origin.index()].insert(path)
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &BTreeSet<Path>)> {
        self.0.iter().enumerate().map(|(i, set)| (NodeId::from(i), set))
    }

    pub fn total_paths(&self) -> usize {
        self.0.iter().map(BTreeSet::len).sum()
    }
}

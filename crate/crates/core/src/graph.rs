//! Undirected network graphs: crash deletion, components and brute-force
//! simple-path enumeration. Used as ground truth, so nothing here shares
//! code with the detector's own path bookkeeping.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::path::NodeId;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NetworkGraph {
    adjacency: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

impl NetworkGraph {
    pub fn new(n: usize, edges: &[(NodeId, NodeId)]) -> Self {
        let mut adjacency: BTreeMap<NodeId, BTreeSet<NodeId>> = (0..n).map(|i| (NodeId::from(i), BTreeSet::new())).collect();
        for &(a, b) in edges {
            adjacency.entry(a).or_default().insert(b);
            adjacency.entry(b).or_default().insert(a);
        }
        Self { adjacency }
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency.keys().copied()
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.adjacency.contains_key(&node)
    }

    pub fn neighbors(&self, node: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency.get(&node).into_iter().flatten().copied()
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.adjacency.get(&a).is_some_and(|s| s.contains(&b))
    }

    /// Edges as ordered pairs `(low, high)`.
    pub fn edges(&self) -> BTreeSet<(NodeId, NodeId)> {
        self.adjacency
            .iter()
            .flat_map(|(&a, set)| set.iter().filter(move |&&b| a < b).map(move |&b| (a, b)))
            .collect()
    }

    /// The graph with `removed` and their incident links deleted.
    pub fn without(&self, removed: &BTreeSet<NodeId>) -> NetworkGraph {
        let adjacency = self
            .adjacency
            .iter()
            .filter(|(id, _)| !removed.contains(id))
            .map(|(&id, set)| (id, set.difference(removed).copied().collect()))
            .collect();
        NetworkGraph { adjacency }
    }

    pub fn component_of(&self, start: NodeId) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::new();
        if !self.contains(start) {
            return seen;
        }
        let mut queue = VecDeque::from([start]);
        seen.insert(start);
        while let Some(u) = queue.pop_front() {
            for v in self.neighbors(u) {
                if seen.insert(v) {
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    /// Connected components, ordered by smallest member.
    pub fn components(&self) -> Vec<BTreeSet<NodeId>> {
        let mut assigned = BTreeSet::new();
        let mut out = Vec::new();
        for node in self.nodes() {
            if assigned.contains(&node) {
                continue;
            }
            let comp = self.component_of(node);
            assigned.extend(comp.iter().copied());
            out.push(comp);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() <= 1
    }

    /// Every simple path from `from` to `to`, as node sequences.
    pub fn simple_paths(&self, from: NodeId, to: NodeId) -> BTreeSet<Vec<NodeId>> {
        let mut out = BTreeSet::new();
        if !self.contains(from) || !self.contains(to) {
            return out;
        }
        let mut stack = vec![from];
        let mut on_stack = BTreeSet::from([from]);
        self.extend_paths(to, &mut stack, &mut on_stack, &mut out);
        out
    }

    fn extend_paths(
        &self,
        to: NodeId,
        stack: &mut Vec<NodeId>,
        on_stack: &mut BTreeSet<NodeId>,
        out: &mut BTreeSet<Vec<NodeId>>,
    ) {
        let tip = *stack.last().expect("stack starts non-empty");
        if tip == to {
            out.insert(stack.clone());
            return;
        }
        for next in self.neighbors(tip) {
            if on_stack.insert(next) {
                stack.push(next);
                self.extend_paths(to, stack, on_stack, out);
                stack.pop();
                on_stack.remove(&next);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u32]) -> BTreeSet<NodeId> {
        v.iter().copied().map(NodeId).collect()
    }

    fn line(n: u32) -> NetworkGraph {
        let edges: Vec<_> = (0..n - 1).map(|i| (NodeId(i), NodeId(i + 1))).collect();
        NetworkGraph::new(n as usize, &edges)
    }

    fn clique(n: u32) -> NetworkGraph {
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                edges.push((NodeId(a), NodeId(b)));
            }
        }
        NetworkGraph::new(n as usize, &edges)
    }

    #[test]
    fn deleting_the_middle_of_a_line_splits_it() {
        let g = line(5).without(&ids(&[2]));
        assert_eq!(g.components(), vec![ids(&[0, 1]), ids(&[3, 4])]);
    }

    #[test]
    fn clique_minus_two_stays_connected() {
        let g = clique(5).without(&ids(&[0, 1]));
        assert_eq!(g.components(), vec![ids(&[2, 3, 4])]);
    }

    #[test]
    fn simple_path_counts_in_cliques() {
        // K_n between two fixed nodes: sum over k of (n-2)!/(n-2-k)!
        assert_eq!(clique(3).simple_paths(NodeId(0), NodeId(1)).len(), 2);
        assert_eq!(clique(4).simple_paths(NodeId(0), NodeId(1)).len(), 5);
        assert_eq!(clique(5).simple_paths(NodeId(0), NodeId(1)).len(), 16);
        assert_eq!(clique(4).simple_paths(NodeId(2), NodeId(2)).len(), 1);
    }

    #[test]
    fn ring_has_two_arcs() {
        let edges: Vec<_> = (0..5u32).map(|i| (NodeId(i), NodeId((i + 1) % 5))).collect();
        let g = NetworkGraph::new(5, &edges);
        let paths = g.simple_paths(NodeId(1), NodeId(3));
        assert_eq!(
            paths,
            [vec![NodeId(1), NodeId(2), NodeId(3)], vec![NodeId(1), NodeId(0), NodeId(4), NodeId(3)]].into_iter().collect()
        );
    }

    #[test]
    fn removed_nodes_have_no_paths() {
        let g = line(3).without(&ids(&[1]));
        assert!(g.simple_paths(NodeId(0), NodeId(2)).is_empty());
        assert!(g.simple_paths(NodeId(1), NodeId(1)).is_empty());
        assert!(!g.is_connected());
    }
}

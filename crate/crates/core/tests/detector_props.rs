use std::collections::BTreeSet;
use std::sync::Arc;

use diamondp::{HeartbeatMessage, NetworkGraph, NodeId, NodeState, Path, PathSetArray, SuspectVector};
use proptest::prelude::*;

#[derive(Debug, Clone)]
enum Step {
    Advance(u64),
    Tick,
    Receive { from: usize, suspects: Vec<bool>, picks: Vec<usize> },
    Expire(usize),
}

fn step(n: usize) -> impl Strategy<Value = Step> {
    prop_oneof![
        (1u64..15).prop_map(Step::Advance),
        Just(Step::Tick),
        (any::<usize>(), prop::collection::vec(any::<bool>(), n), prop::collection::vec(any::<usize>(), 0..8))
            .prop_map(|(from, suspects, picks)| Step::Receive { from, suspects, picks }),
        any::<usize>().prop_map(Step::Expire),
    ]
}

/// A connected graph on `n` nodes: a path plus optional chords.
fn graph() -> impl Strategy<Value = NetworkGraph> {
    (2usize..=5).prop_flat_map(|n| {
        prop::collection::vec(any::<bool>(), n * n).prop_map(move |chords| {
            let mut edges: Vec<(NodeId, NodeId)> = (1..n).map(|i| (NodeId::from(i - 1), NodeId::from(i))).collect();
            for a in 0..n {
                for b in a + 2..n {
                    if chords[a * n + b] {
                        edges.push((NodeId::from(a), NodeId::from(b)));
                    }
                }
            }
            NetworkGraph::new(n, &edges)
        })
    })
}

fn case() -> impl Strategy<Value = (NetworkGraph, usize, u64, Vec<Step>)> {
    graph().prop_flat_map(|g| {
        let n = g.node_count();
        (Just(g), 0..n, 1u64..6, prop::collection::vec(step(n), 0..60))
    })
}

/// Simple paths of `g` that end at `sender`, indexed by origin.
fn paths_to(g: &NetworkGraph, sender: NodeId) -> Vec<(NodeId, Path)> {
    g.nodes().flat_map(|q| g.simple_paths(q, sender).into_iter().map(move |p| (q, Path::new(p)))).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn invariants_hold_under_any_call_sequence((g, me, period, steps) in case()) {
        let n = g.node_count();
        let me = NodeId::from(me);
        let neighbors: Vec<NodeId> = g.neighbors(me).collect();
        let mut s = NodeState::new(me, neighbors.iter().copied().collect(), n, period).unwrap();
        let initial_paths: BTreeSet<(NodeId, Path)> =
            g.nodes().flat_map(|q| g.simple_paths(q, me).into_iter().map(move |p| (q, Path::new(p)))).collect();

        for st in steps {
            let before = s.clone();
            match st {
                Step::Advance(k) => s.set_clock(s.clock() + k).unwrap(),
                Step::Tick => {
                    let next = s.clock().div_ceil(period) * period;
                    s.set_clock(next).unwrap();
                    let out = s.on_heartbeat_tick().unwrap();
                    prop_assert_eq!(out.len(), neighbors.len());
                    for (_, m) in &out {
                        prop_assert_eq!(&m.suspect, s.suspect_local());
                    }
                }
                Step::Receive { from, suspects, picks } => {
                    if neighbors.is_empty() { continue; }
                    let sender = neighbors[from % neighbors.len()];
                    let pool = paths_to(&g, sender);
                    let mut paths = PathSetArray::empty(n);
                    paths.insert(sender, Path::singleton(sender));
                    for i in picks {
                        let (q, p) = &pool[i % pool.len()];
                        paths.insert(*q, p.clone());
                    }
                    let msg = HeartbeatMessage::new(sender, SuspectVector::from_flags(suspects), Arc::new(paths));
                    s.on_receive(&msg).unwrap();
                    prop_assert_eq!(s.last_contact(sender), Some(s.clock()));
                    prop_assert!(!s.suspect_local().get(sender));
                }
                Step::Expire(i) => {
                    if neighbors.is_empty() { continue; }
                    let q = neighbors[i % neighbors.len()];
                    let Some(deadline) = s.timer_deadline(q) else { continue };
                    s.set_clock(deadline.max(s.clock())).unwrap();
                    s.on_timer_expiry(q).unwrap();
                    prop_assert!(s.suspect_local().get(q));
                }
            }

            prop_assert_eq!(s.check_invariants(), Ok(()));
            prop_assert!(!s.suspect().get(me) && !s.suspect_local().get(me), "self suspected");
            for &q in &neighbors {
                prop_assert_eq!(s.suspect().get(q), s.suspect_local().get(q), "neighbor {} not mirrored", q);
                prop_assert!(s.timeout(q) >= before.timeout(q), "timeout for {} shrank", q);
            }
            for (q, set) in before.paths().iter() {
                prop_assert!(set.is_subset(s.paths().get(q)), "paths for {} shrank", q);
            }
            for (q, set) in s.paths().iter() {
                for p in set {
                    prop_assert!(initial_paths.contains(&(q, p.clone())), "{} is not a simple path {}->{}", p, q, me);
                }
            }
        }
    }
}

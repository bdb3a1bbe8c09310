//! Reachability and shortest paths.
//!
//! Movement follows traversability edges between regions. A containment
//! edge may only be used as the first hop (leaving an object start) or the
//! last hop (arriving at an object target), so an object is reachable
//! exactly when one of its containing regions is.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use super::{EdgeKind, GraphError, NodeId, SemanticGraph};

#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    pub path: Vec<NodeId>,
    pub length_m: f64,
}

fn require<'a>(graph: &'a SemanticGraph, id: &NodeId) -> Result<&'a NodeId, GraphError> {
    graph
        .nodes
        .get_key_value(id)
        .map(|(k, _)| k)
        .ok_or_else(|| GraphError::UnknownNode(id.clone()))
}

fn hop_allowed(kind: EdgeKind, u: &NodeId, v: &NodeId, start: &NodeId, goal: &NodeId) -> bool {
    match kind {
        EdgeKind::Traversability => true,
        EdgeKind::Containment => u == start || v == goal,
    }
}

/// True iff `to` can be reached from `from`.
pub fn reachable(graph: &SemanticGraph, from: &NodeId, to: &NodeId) -> Result<bool, GraphError> {
    let from = require(graph, from)?;
    let to = require(graph, to)?;
    if from == to {
        return Ok(true);
    }
    let mut seen = std::collections::BTreeSet::from([from]);
    let mut queue = VecDeque::from([from]);
    while let Some(u) = queue.pop_front() {
        for (v, kind) in graph.neighbors(u) {
            if !hop_allowed(kind, u, v, from, to) || !seen.insert(v) {
                continue;
            }
            if v == to {
                return Ok(true);
            }
            queue.push_back(v);
        }
    }
    Ok(false)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cost {
    len: f64,
    hops: usize,
}

impl Eq for Cost {}

impl Ord for Cost {
    fn cmp(&self, other: &Self) -> Ordering {
        self.len
            .total_cmp(&other.len)
            .then(self.hops.cmp(&other.hops))
    }
}

impl PartialOrd for Cost {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn edge_len(graph: &SemanticGraph, a: &NodeId, b: &NodeId) -> f64 {
    graph.nodes[a].position.distance(graph.nodes[b].position)
}

/// Dijkstra over (length, hops) from `origin`, where `other_end` is the node
/// a containment edge may lead into.
fn costs_from<'a>(
    graph: &'a SemanticGraph,
    origin: &'a NodeId,
    other_end: &'a NodeId,
    allow: &dyn Fn(&NodeId, &NodeId) -> bool,
) -> BTreeMap<&'a NodeId, Cost> {
    let mut best: BTreeMap<&NodeId, Cost> = BTreeMap::new();
    let mut heap = BinaryHeap::new();
    best.insert(origin, Cost { len: 0.0, hops: 0 });
    heap.push(std::cmp::Reverse((Cost { len: 0.0, hops: 0 }, origin)));
    while let Some(std::cmp::Reverse((cost, u))) = heap.pop() {
        if best.get(u).is_some_and(|b| *b < cost) {
            continue;
        }
        for (v, kind) in graph.neighbors(u) {
            if !hop_allowed(kind, u, v, origin, other_end) || !allow(u, v) {
                continue;
            }
            let next = Cost {
                len: cost.len + edge_len(graph, u, v),
                hops: cost.hops + 1,
            };
            if best.get(v).is_none_or(|b| next < *b) {
                best.insert(v, next);
                heap.push(std::cmp::Reverse((next, v)));
            }
        }
    }
    best
}

/// Minimum summed Euclidean length path. Among equal-length paths the one
/// with fewer hops wins, then the lexicographically smallest id sequence.
pub fn shortest_path(
    graph: &SemanticGraph,
    from: &NodeId,
    to: &NodeId,
) -> Result<PathResult, GraphError> {
    shortest_path_avoiding(graph, from, to, |_, _| true)
}

/// [`shortest_path`] restricted to hops for which `allow(u, v)` holds.
pub fn shortest_path_avoiding(
    graph: &SemanticGraph,
    from: &NodeId,
    to: &NodeId,
    allow: impl Fn(&NodeId, &NodeId) -> bool,
) -> Result<PathResult, GraphError> {
    let from = require(graph, from)?;
    let to = require(graph, to)?;
    if from == to {
        return Ok(PathResult {
            path: vec![from.clone()],
            length_m: 0.0,
        });
    }
    // Costs measured from the goal so the forward walk can pick, at every
    // step, the smallest id that still lies on an optimal path.
    let reverse_allow = |u: &NodeId, v: &NodeId| allow(v, u);
    let to_goal = costs_from(graph, to, from, &reverse_allow);
    let Some(total) = to_goal.get(from).copied() else {
        return Err(GraphError::NoPath {
            from: from.clone(),
            to: to.clone(),
        });
    };
    let eps = 1e-9 * total.len.max(1.0);
    let mut path = vec![from.clone()];
    let mut length = 0.0;
    let mut u = from;
    let mut here = total;
    while u != to {
        let (v, cost) = graph
            .neighbors(u)
            .filter(|(v, kind)| hop_allowed(*kind, u, v, from, to) && allow(u, v))
            .filter_map(|(v, _)| to_goal.get(v).map(|c| (v, *c)))
            .find(|(v, c)| {
                c.hops + 1 == here.hops && (c.len + edge_len(graph, u, v) - here.len).abs() <= eps
            })
            .expect("optimal predecessor exists on the shortest-path tree");
        length += edge_len(graph, u, v);
        path.push(v.clone());
        u = v;
        here = cost;
    }
    Ok(PathResult {
        path,
        length_m: length,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::tests::{id, sample};
    use crate::graph::{Edge, Node};

    #[test]
    fn reflexive_and_unknown() {
        let g = sample();
        assert!(reachable(&g, &id("home"), &id("home")).unwrap());
        assert_eq!(
            reachable(&g, &id("home"), &id("ghost")).unwrap_err(),
            GraphError::UnknownNode(id("ghost"))
        );
    }

    #[test]
    fn no_edges_means_unreachable() {
        let g = SemanticGraph::new(
            [
                Node::region("a", "field", 0.0, 0.0).unwrap(),
                Node::region("b", "field", 1.0, 0.0).unwrap(),
            ],
            [],
        )
        .unwrap();
        assert!(!reachable(&g, &id("a"), &id("b")).unwrap());
        let err = shortest_path(&g, &id("a"), &id("b")).unwrap_err();
        assert_eq!(err.to_string(), "no path from 'a' to 'b'");
    }

    #[test]
    fn three_four_five() {
        let g = SemanticGraph::new(
            [
                Node::region("a", "road", 0.0, 0.0).unwrap(),
                Node::region("b", "road", 3.0, 4.0).unwrap(),
            ],
            [Edge::traversability("a", "b").unwrap()],
        )
        .unwrap();
        let p = shortest_path(&g, &id("a"), &id("b")).unwrap();
        assert_eq!(p.path, vec![id("a"), id("b")]);
        assert_eq!(p.length_m, 5.0);
        let p = shortest_path(&g, &id("a"), &id("a")).unwrap();
        assert_eq!(p.path, vec![id("a")]);
        assert_eq!(p.length_m, 0.0);
    }

    #[test]
    fn objects_reachable_through_their_region_only() {
        let mut g = sample();
        g.insert_node(Node::object("bin", "bin", 3.0, 5.0).unwrap())
            .unwrap();
        g.insert_edge(Edge::containment("lot_a", "bin").unwrap())
            .unwrap();
        assert!(reachable(&g, &id("home"), &id("car_1")).unwrap());
        // object to object through the shared region
        let p = shortest_path(&g, &id("car_1"), &id("bin")).unwrap();
        assert_eq!(p.path, vec![id("car_1"), id("lot_a"), id("bin")]);
        // a containment edge is never a shortcut through an object
        g.insert_node(Node::region("far", "field", 100.0, 0.0).unwrap())
            .unwrap();
        g.insert_edge(Edge::containment("far", "bin").unwrap())
            .unwrap();
        assert!(!reachable(&g, &id("home"), &id("far")).unwrap());
        assert!(reachable(&g, &id("far"), &id("bin")).unwrap());
    }

    #[test]
    fn ties_resolve_to_smallest_ids() {
        // a -> {b, c} -> d, both legs equal length.
        let g = SemanticGraph::new(
            [
                Node::region("a", "x", 0.0, 0.0).unwrap(),
                Node::region("c", "x", 1.0, 1.0).unwrap(),
                Node::region("b", "x", 1.0, -1.0).unwrap(),
                Node::region("d", "x", 2.0, 0.0).unwrap(),
            ],
            [
                Edge::traversability("a", "b").unwrap(),
                Edge::traversability("a", "c").unwrap(),
                Edge::traversability("b", "d").unwrap(),
                Edge::traversability("c", "d").unwrap(),
            ],
        )
        .unwrap();
        let p = shortest_path(&g, &id("a"), &id("d")).unwrap();
        assert_eq!(p.path, vec![id("a"), id("b"), id("d")]);
        let p = shortest_path_avoiding(&g, &id("a"), &id("d"), |u, v| {
            !(u.as_str() == "a" && v.as_str() == "b")
        })
        .unwrap();
        assert_eq!(p.path, vec![id("a"), id("c"), id("d")]);
    }
}

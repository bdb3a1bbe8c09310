use std::collections::{BTreeMap, BTreeSet};

use super::{Edge, NodeId, SemanticGraph};

/// Two nodes sharing an id are the same entity only when they are at most
/// this far apart.
pub const MERGE_DISTANCE_M: f64 = 2.0;

/// Unions `incoming` into `base`. Total: every incoming node ends up either
/// folded into a base node (same id, same kind, within
/// [`MERGE_DISTANCE_M`]; the incoming description wins) or added, renamed to
/// `<id>__<source_tag>` when its id is taken.
pub fn merge(base: &SemanticGraph, incoming: &SemanticGraph, source_tag: &str) -> SemanticGraph {
    let tag = sanitize_tag(source_tag);
    let incoming_ids: BTreeSet<&NodeId> = incoming.node_ids().collect();
    let mut result = base.clone();
    let mut renamed: BTreeMap<NodeId, NodeId> = BTreeMap::new();

    for node in incoming.nodes() {
        if let Some(existing) = base.node(&node.id) {
            if existing.kind == node.kind
                && existing.position.distance(node.position) <= MERGE_DISTANCE_M
            {
                let mut merged = existing.clone();
                merged.description = node.description.clone();
                merged.visible |= node.visible;
                result
                    .replace_node(merged)
                    .expect("kind unchanged, so incident edges stay valid");
                renamed.insert(node.id.clone(), node.id.clone());
                continue;
            }
        }
        let mut candidate = node.id.clone();
        while result.contains(&candidate)
            || (candidate != node.id && incoming_ids.contains(&candidate))
        {
            candidate = NodeId(format!("{candidate}__{tag}"));
        }
        let mut added = node.clone();
        added.id = candidate.clone();
        result.insert_node(added).expect("candidate id is free");
        renamed.insert(node.id.clone(), candidate);
    }

    for e in incoming.edges() {
        let a = renamed[&e.a].clone();
        let b = renamed[&e.b].clone();
        if result.edge_kind(&a, &b).is_none() {
            // Kinds are preserved for merged and renamed nodes alike, so this
            // only fails if a != b collapses, which ids rule out.
            let _ = result.insert_edge(Edge::new(a, b, e.kind));
        }
    }
    result
}

fn sanitize_tag(tag: &str) -> String {
    let t: String = tag
        .chars()
        .map(|c| {
            let c = c.to_ascii_lowercase();
            if c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    if t.is_empty() {
        "merged".into()
    } else {
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::tests::{id, sample};
    use crate::graph::{Edge, Node};

    #[test]
    fn merge_with_empty_is_identity() {
        let g = sample();
        assert_eq!(merge(&g, &SemanticGraph::empty(), "uav"), g);
        assert_eq!(merge(&g, &g, "uav"), g);
    }

    #[test]
    fn close_collision_takes_incoming_description() {
        let g = sample();
        let incoming = SemanticGraph::new(
            [Node::object("car_1", "car", 4.3, 4.4)
                .unwrap()
                .with_description("blue van")],
            [],
        )
        .unwrap();
        let m = merge(&g, &incoming, "uav");
        assert_eq!(m.node_count(), g.node_count());
        let car = m.node(&id("car_1")).unwrap();
        assert_eq!(car.description, "blue van");
        assert_eq!(car.position, g.node(&id("car_1")).unwrap().position);
    }

    #[test]
    fn far_collision_renames_with_suffix() {
        let g = sample();
        let incoming = SemanticGraph::new(
            [
                Node::region("lot_a", "parking_lot", 13.0, 4.0).unwrap(),
                Node::object("tree", "tree", 13.0, 5.0).unwrap(),
            ],
            [Edge::containment("lot_a", "tree").unwrap()],
        )
        .unwrap();
        let m = merge(&g, &incoming, "UAV");
        assert_eq!(m.node_count(), g.node_count() + 2);
        let renamed = m.node(&id("lot_a__uav")).unwrap();
        assert_eq!(renamed.position.x, 13.0);
        assert_eq!(
            m.edge_kind(&id("lot_a__uav"), &id("tree")),
            Some(crate::EdgeKind::Containment)
        );
        assert!(g.is_subgraph_of(&m));
    }

    #[test]
    fn rename_avoids_taken_suffixes() {
        let g = SemanticGraph::new(
            [
                Node::region("a", "x", 0.0, 0.0).unwrap(),
                Node::region("a__t", "x", 50.0, 0.0).unwrap(),
            ],
            [],
        )
        .unwrap();
        let incoming =
            SemanticGraph::new([Node::region("a", "x", 10.0, 0.0).unwrap()], []).unwrap();
        let m = merge(&g, &incoming, "t");
        assert!(m.contains(&id("a__t__t")));
        assert_eq!(m.node_count(), 3);
    }

    #[test]
    fn kind_mismatch_is_never_folded() {
        let g = sample();
        let incoming =
            SemanticGraph::new([Node::region("car_1", "lot", 4.0, 4.0).unwrap()], []).unwrap();
        let m = merge(&g, &incoming, "uav");
        assert!(m.contains(&id("car_1__uav")));
    }
}

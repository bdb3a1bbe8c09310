use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::geometry::Point;
use crate::graph::{Edge, EdgeKind, Node, SemanticGraph};
use crate::sim::WorldScenario;

const REGION_KINDS: [(&str, &str); 5] = [
    ("lot", "parking_lot"),
    ("yard", "construction_yard"),
    ("road", "road"),
    ("field", "field"),
    ("dock", "loading_dock"),
];
const OBJECT_CLASSES: [&str; 4] = ["car", "container", "barrel", "person"];
const COLORS: [&str; 4] = ["red", "white", "grey", "blue"];

/// A small obstacle-free 64 m world with a connected road network and a
/// few objects, half of them hidden. The goal is any answer at all, so
/// missions are judged on reaching one.
pub fn synth_world(seed: u64) -> WorldScenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.gen_range(5..=8);
    let mut places: Vec<Point> = Vec::new();
    while places.len() < count {
        let p = Point::new(
            rng.gen_range(4..60) as f64 + 0.5,
            rng.gen_range(4..60) as f64 + 0.5,
        );
        if places.iter().all(|q| q.distance(p) >= 8.0) {
            places.push(p);
        }
    }

    let mut g = SemanticGraph::empty();
    let mut ids: Vec<String> = Vec::new();
    for (i, p) in places.iter().enumerate() {
        let (short, class) = *REGION_KINDS.choose(&mut rng).expect("non-empty");
        let id = format!("{short}_{}", i + 1);
        g.insert_node(Node::region(&id, class, p.x, p.y).expect("valid region"))
            .expect("fresh id");
        if i > 0 {
            let nearest = (0..i)
                .min_by(|&a, &b| places[a].distance(*p).total_cmp(&places[b].distance(*p)))
                .expect("earlier region");
            g.insert_edge(Edge::traversability(&ids[nearest], &id).expect("valid edge"))
                .expect("new edge");
        }
        ids.push(id);
    }

    let mut k = 0;
    for (i, p) in places.iter().enumerate() {
        if !rng.gen_bool(0.7) {
            continue;
        }
        k += 1;
        let class = *OBJECT_CLASSES.choose(&mut rng).expect("non-empty");
        let color = *COLORS.choose(&mut rng).expect("non-empty");
        let id = format!("{class}_{k}");
        let (dx, dy) = (rng.gen_range(-3.0..3.0_f64), rng.gen_range(-3.0..3.0_f64));
        let node = Node::object(&id, class, p.x + dx, p.y + dy)
            .expect("valid object")
            .with_description(format!("{color} {class}"))
            .with_visible(rng.gen_bool(0.5));
        g.insert_node(node).expect("fresh id");
        let owner = crate::graph::NodeId::new(ids[i].as_str()).expect("valid id");
        let obj = crate::graph::NodeId::new(id.as_str()).expect("valid id");
        g.insert_edge(Edge::new(obj, owner, EdgeKind::Containment))
            .expect("new edge");
    }

    let file = json!({
        "id": format!("synth_{seed}"),
        "graph": g,
        "grid": {"width": 64, "height": 64, "resolution": 1.0, "origin": [0.0, 0.0]},
        "start_node": ids[0],
        "goal": {"answer_contains": ""},
        "seed": seed,
    });
    WorldScenario::from_json(&file.to_string()).expect("synthetic world is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::reachable;

    #[test]
    fn synthetic_worlds_are_connected_and_seeded() {
        for seed in 0..20 {
            let w = synth_world(seed);
            assert_eq!(w, synth_world(seed));
            for id in w.truth.node_ids() {
                assert!(
                    reachable(&w.truth, &w.start_node, id).unwrap(),
                    "seed {seed}: {id}"
                );
            }
        }
        assert_ne!(synth_world(1).truth, synth_world(2).truth);
    }
}

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;

use crate::graph::{serialize_graph, NodeKind, SemanticGraph};
use crate::mission::{ClientError, ModelClient};
use crate::plan::Prompt;

const CONDITIONS: [&str; 4] = ["damage", "people", "leaks", "movement"];

/// `n` specifications drawn from fixed templates over the graph's nodes.
/// Same graph and seed, same list. Empty when the graph has no regions.
pub fn generate_specs(graph: &SemanticGraph, n: usize, seed: u64) -> Vec<String> {
    let regions: Vec<_> = graph
        .nodes()
        .filter(|n| n.kind == NodeKind::Region)
        .collect();
    let all: Vec<_> = graph.nodes().collect();
    if regions.is_empty() {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| match rng.gen_range(0..3) {
            0 => {
                let r = regions.choose(&mut rng).expect("non-empty");
                format!(
                    "Is there activity in the {} {}?",
                    r.class.replace('_', " "),
                    r.id
                )
            }
            1 => {
                let node = all.choose(&mut rng).expect("non-empty");
                let cond = CONDITIONS.choose(&mut rng).expect("non-empty");
                format!("Inspect {} for {}", node.id, cond)
            }
            _ => {
                let r = regions.choose(&mut rng).expect("non-empty");
                format!("Map the area around {}", r.id)
            }
        })
        .collect()
}

/// The request sent to a model asked for specifications.
pub fn spec_prompt(graph: &SemanticGraph, n: usize) -> Prompt {
    Prompt {
        system: "You write short mission specifications for a ground robot operating on a scene graph. \
                 Reply with one specification per line and nothing else."
            .into(),
        user: format!(
            "Scene graph:\n{}\n\nWrite {n} specifications. Refer to places and objects by their node id.",
            serialize_graph(graph).trim_end()
        ),
    }
}

fn id_token() -> Regex {
    Regex::new(r"\b[A-Za-z][A-Za-z0-9]*(?:_[A-Za-z0-9]+)+\b").expect("valid regex")
}

fn strip_bullet(line: &str) -> &str {
    let t = line.trim();
    let t = t.trim_start_matches(['-', '*', '\u{2022}']).trim_start();
    let digits = t.len() - t.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    if digits > 0 {
        if let Some(rest) = t[digits..].strip_prefix(['.', ')']) {
            return rest.trim_start();
        }
    }
    t
}

/// Asks `client` for specifications and keeps those whose id-like tokens
/// (anything with an underscore) all name a node or class in the graph.
/// Duplicates are dropped; at most `n` are returned.
pub fn generate_specs_with_model(
    client: &mut dyn ModelClient,
    graph: &SemanticGraph,
    n: usize,
) -> Result<Vec<String>, ClientError> {
    let raw = client.complete(&spec_prompt(graph, n))?;
    let known: BTreeSet<&str> = graph
        .node_ids()
        .map(|id| id.as_str())
        .chain(graph.classes())
        .collect();
    let re = id_token();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for line in raw.lines() {
        let spec = strip_bullet(line);
        if spec.is_empty() || out.len() >= n {
            continue;
        }
        let grounded = re.find_iter(spec).all(|m| known.contains(m.as_str()));
        if !grounded {
            tracing::debug!(spec, "dropping spec with unknown ids");
            continue;
        }
        if seen.insert(spec.to_string()) {
            out.push(spec.to_string());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, Node};
    use crate::mission::ScriptedClient;

    fn graph() -> SemanticGraph {
        SemanticGraph::new(
            vec![
                Node::region("lot_south", "parking_lot", 0.0, 0.0).unwrap(),
                Node::region("yard", "construction_yard", 20.0, 0.0).unwrap(),
                Node::object("car_1", "car", 1.0, 1.0).unwrap(),
            ],
            vec![
                Edge::traversability("lot_south", "yard").unwrap(),
                Edge::containment("car_1", "lot_south").unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn templates_are_seeded() {
        let a = generate_specs(&graph(), 30, 7);
        assert_eq!(a.len(), 30);
        assert_eq!(a, generate_specs(&graph(), 30, 7));
        assert_ne!(a, generate_specs(&graph(), 30, 8));
        assert!(a
            .iter()
            .any(|s| s == "Is there activity in the parking lot lot_south?"));
        assert!(a.iter().any(|s| s.starts_with("Map the area around ")));
        assert!(a.iter().any(|s| s.starts_with("Inspect ")));
        assert!(generate_specs(&SemanticGraph::empty(), 3, 1).is_empty());
    }

    #[test]
    fn model_specs_with_unknown_ids_are_dropped() {
        let reply = "1. Check warehouse_9 for intruders\n\
                     2. Is there activity in the parking lot lot_south?\n\
                     - Inspect car_1 for damage\n\
                     \n\
                     * Inspect car_1 for damage\n\
                     Survey the construction_yard near yard";
        let mut c = ScriptedClient::new(vec![reply.into()]);
        let specs = generate_specs_with_model(&mut c, &graph(), 10).unwrap();
        assert_eq!(
            specs,
            vec![
                "Is there activity in the parking lot lot_south?",
                "Inspect car_1 for damage",
                "Survey the construction_yard near yard",
            ]
        );
        let mut c = ScriptedClient::new(vec![reply.into()]);
        assert_eq!(
            generate_specs_with_model(&mut c, &graph(), 1)
                .unwrap()
                .len(),
            1
        );
    }
}

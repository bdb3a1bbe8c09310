use serde_json::{json, Value};

use crate::graph::{reachable, NodeId, NodeKind, SemanticGraph};
use crate::mission::{ClientError, ModelClient};
use crate::plan::{extract_context, extract_graph, extract_history, extract_mission, Prompt};
use crate::repair::respond;

/// A rule-based planner that reads the rendered prompt and answers the
/// three template mission shapes. Deterministic and offline, so it can
/// stand in for a large expert model when building test corpora.
#[derive(Debug, Clone, Default)]
pub struct GreedyExpert {
    calls: usize,
}

impl GreedyExpert {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn calls(&self) -> usize {
        self.calls
    }
}

fn words(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .filter(|w| !w.is_empty())
}

/// The node the mission is about: a named id first, otherwise a node whose
/// class is spelled out, regions before objects.
fn target(graph: &SemanticGraph, mission: &str) -> Option<NodeId> {
    if let Some(id) = words(mission).find_map(|w| graph.node_by_str(w)) {
        return Some(id.id.clone());
    }
    let lower = mission.to_lowercase();
    let mut hits: Vec<_> = graph
        .nodes()
        .filter(|n| lower.contains(&n.class.replace('_', " ")))
        .collect();
    hits.sort_by_key(|n| (n.kind != NodeKind::Region, n.id.clone()));
    hits.first().map(|n| n.id.clone())
}

fn plan(reasoning: &str, tasks: Vec<Value>) -> String {
    respond(reasoning, &tasks)
}

impl ModelClient for GreedyExpert {
    fn name(&self) -> &str {
        "greedy-expert"
    }

    fn complete(&mut self, prompt: &Prompt) -> Result<String, ClientError> {
        self.calls += 1;
        let malformed = |what: &str| ClientError::Malformed(format!("prompt has no {what}"));
        let graph = extract_graph(&prompt.user).map_err(|_| malformed("graph"))?;
        let ctx = extract_context(&prompt.user).ok_or_else(|| malformed("robot section"))?;
        let mission = extract_mission(&prompt.user).ok_or_else(|| malformed("mission"))?;
        let history = extract_history(&prompt.user);

        let Some(t) = target(&graph, mission) else {
            return Ok(plan(
                "The mission names nothing I can find on the map.",
                vec![
                    json!({"behavior": "clarify", "args": {"question": "Which place or object do you mean?"}}),
                ],
            ));
        };
        if !reachable(&graph, &ctx.at, &t).unwrap_or(false) {
            return Ok(plan(
                &format!("{t} is on the map but I have no route to it."),
                vec![
                    json!({"behavior": "clarify", "args": {"question": format!("There is no known route to {t}. How should I proceed?")}}),
                ],
            ));
        }
        let node = graph.node(&t).expect("target is in the graph");
        let goto = (ctx.at != t).then(|| json!({"behavior": "goto", "args": {"node": t.as_str()}}));
        let lower = mission.trim_start().to_lowercase();

        let mut tasks: Vec<Value> = goto.into_iter().collect();
        let reasoning;
        if lower.starts_with("inspect") {
            let marker = format!("inspection result: {t}: ");
            let seen = history
                .lines()
                .rev()
                .find_map(|l| l.strip_prefix(marker.as_str()));
            if let Some(found) = seen {
                return Ok(plan(
                    "The inspection is done; report it.",
                    vec![
                        json!({"behavior": "answer", "args": {"text": format!("Inspected {t}: {found}.")}}),
                    ],
                ));
            }
            reasoning = format!("Go to {t} and look at it closely.");
            tasks.push(json!({"behavior": "inspect", "args": {"node": t.as_str(), "query": mission.trim()}}));
        } else if lower.starts_with("map") && node.kind == NodeKind::Region {
            let objects = graph.nodes().filter(|n| n.kind == NodeKind::Object).count();
            reasoning = format!("Drive to {t} and map the objects around it.");
            tasks.push(json!({"behavior": "map_region", "args": {"region": t.as_str()}}));
            tasks.push(json!({"behavior": "answer", "args": {"text": format!("Mapped the area around {t}; {objects} objects known before mapping.")}}));
        } else {
            let around: Vec<String> = graph
                .neighbors(&t)
                .filter(|(id, _)| graph.node(id).is_some_and(|n| n.kind == NodeKind::Object))
                .map(|(id, _)| id.to_string())
                .collect();
            reasoning = format!("Visit {t} and report what is there.");
            let text = if node.kind == NodeKind::Region && !around.is_empty() {
                format!("At {t} I see {}.", around.join(", "))
            } else {
                format!("No activity observed at {t}.")
            };
            tasks.push(json!({"behavior": "answer", "args": {"text": text}}));
        }
        Ok(plan(&reasoning, tasks))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distill::synth_world;
    use crate::mission::{run_mission, LoopConfig, Outcome};

    #[test]
    fn expert_finishes_template_missions() {
        let w = synth_world(3);
        let known = w.initial_state().known;
        let specs = crate::distill::generate_specs(&known, 12, 3);
        for spec in specs {
            let mut e = GreedyExpert::new();
            let r = run_mission(&spec, &w, &mut e, &LoopConfig::default());
            assert_eq!(r.outcome, Outcome::Success, "{spec}: {:?}", r.trace.last());
        }
    }

    #[test]
    fn unknown_target_asks_for_clarification() {
        let w = synth_world(3);
        let mut e = GreedyExpert::new();
        let r = run_mission("Check the moon", &w, &mut e, &LoopConfig::default());
        assert_eq!(r.outcome, Outcome::FailureClarification);
    }
}

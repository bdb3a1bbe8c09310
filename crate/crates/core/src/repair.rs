//! Built-in repair suite: twenty missions whose scripted planner first
//! answers with a broken plan and only produces a correct one once the
//! prompt carries validator feedback. With feedback disabled the broken
//! plan repeats until the retry budget runs out, so the suite measures how
//! much the feedback channel alone is worth.

use serde_json::{json, Value};

use crate::graph::NodeId;
use crate::mission::{run_mission, LoopConfig, MissionReport, ScriptRule, ScriptedClient};
use crate::sim::{GoalPredicate, WorldScenario};

/// Marker the scripted planner looks for. It only ever appears in rendered
/// history entries, never in the system prompt or the graph.
pub const FEEDBACK_MARKER: &str = "[feedback]";

const DEPOT: &str = r#"{
  "id": "depot",
  "graph": {
    "nodes": [
      {"id": "home", "kind": "region", "class": "base", "x": 5, "y": 5},
      {"id": "road_a", "kind": "region", "class": "road", "x": 20, "y": 5},
      {"id": "lot_south", "kind": "region", "class": "parking_lot", "x": 40, "y": 5},
      {"id": "yard", "kind": "region", "class": "construction_yard", "x": 20, "y": 30},
      {"id": "lot_north", "kind": "region", "class": "parking_lot", "x": 40, "y": 45},
      {"id": "tower", "kind": "region", "class": "comm_tower", "x": 5, "y": 45},
      {"id": "island", "kind": "region", "class": "field", "x": 56, "y": 56},
      {"id": "container_1", "kind": "object", "class": "container", "x": 17, "y": 28,
       "desc": "blue shipping container, sealed"},
      {"id": "car_1", "kind": "object", "class": "car", "x": 42, "y": 8,
       "desc": "white van, engine running", "visible": false},
      {"id": "excavator_1", "kind": "object", "class": "excavator", "x": 22, "y": 33,
       "desc": "yellow excavator, idle", "visible": false}
    ],
    "edges": [
      {"a": "home", "b": "road_a", "kind": "traversability"},
      {"a": "lot_south", "b": "road_a", "kind": "traversability"},
      {"a": "road_a", "b": "yard", "kind": "traversability"},
      {"a": "lot_north", "b": "yard", "kind": "traversability"},
      {"a": "tower", "b": "yard", "kind": "traversability"},
      {"a": "car_1", "b": "lot_south", "kind": "containment"},
      {"a": "container_1", "b": "yard", "kind": "containment"},
      {"a": "excavator_1", "b": "yard", "kind": "containment"}
    ]
  },
  "grid": {"width": 64, "height": 64, "resolution": 1.0, "origin": [0, 0],
           "obstacles": [{"x0": 50, "y0": 50, "x1": 64, "y1": 51},
                         {"x0": 50, "y0": 50, "x1": 51, "y1": 64}]},
  "known_obstacles": [{"x0": 50, "y0": 50, "x1": 64, "y1": 51},
                      {"x0": 50, "y0": 50, "x1": 51, "y1": 64}],
  "start_node": "home",
  "goal": {"visit_node": "home"}
}"#;

/// The shared world every repair mission runs in.
pub fn depot_world() -> WorldScenario {
    WorldScenario::from_json(DEPOT).expect("built-in world is valid")
}

/// One faulty-then-corrected mission.
#[derive(Debug, Clone)]
pub struct RepairCase {
    pub id: String,
    pub spec: String,
    pub scenario: WorldScenario,
    pub script: ScriptedClient,
}

/// Model-style output: prose followed by a fenced plan.
pub fn respond(reasoning: &str, tasks: &[Value]) -> String {
    let body = json!({ "reasoning": reasoning, "tasks": tasks });
    format!("{reasoning}\n```json\n{body}\n```")
}

fn goto(node: &str) -> Value {
    json!({"behavior": "goto", "args": {"node": node}})
}

fn answer(text: &str) -> Value {
    json!({"behavior": "answer", "args": {"text": text}})
}

fn id(s: &str) -> NodeId {
    NodeId::new(s).expect("built-in id")
}

fn visit(node: &str) -> GoalPredicate {
    GoalPredicate::VisitNode(id(node))
}

fn says(text: &str) -> GoalPredicate {
    GoalPredicate::AnswerContains(text.into())
}

fn all(parts: Vec<GoalPredicate>) -> GoalPredicate {
    GoalPredicate::All(parts)
}

struct Def {
    spec: &'static str,
    start: &'static str,
    goal: GoalPredicate,
    faulty: String,
    /// Rules consulted before the feedback rule.
    extra: Vec<(&'static str, String)>,
    fixed: String,
}

fn defs() -> Vec<Def> {
    let r = respond;
    vec![
        Def {
            spec: "Return to home",
            start: "lot_south",
            goal: visit("home"),
            faulty: r("Head back to the warehouse.", &[goto("warehouse_9")]),
            extra: vec![],
            fixed: r("Home is two hops away.", &[goto("home")]),
        },
        Def {
            spec: "Check whether the northern parking lot is clear",
            start: "home",
            goal: all(vec![visit("lot_north"), says("clear")]),
            faulty: r("The field is north.", &[goto("island"), answer("clear")]),
            extra: vec![],
            fixed: r("Drive via the yard.", &[goto("lot_north"), answer("The northern lot is clear")]),
        },
        Def {
            spec: "Survey the northern parking lot",
            start: "home",
            goal: all(vec![visit("lot_north"), says("clear")]),
            faulty: r(
                "Sweep the field.",
                &[json!({"behavior": "explore_region", "args": {"region": "island", "radius_m": 5}}), answer("clear")],
            ),
            extra: vec![],
            fixed: r(
                "Sweep the lot instead.",
                &[
                    json!({"behavior": "explore_region", "args": {"region": "lot_north", "radius_m": 5}}),
                    answer("Lot surveyed, all clear"),
                ],
            ),
        },
        Def {
            spec: "Extend the map east of the road",
            start: "home",
            goal: says("extended"),
            faulty: r(
                "Push far east.",
                &[json!({"behavior": "extend_map", "args": {"x": 120, "y": 10}}), answer("extended")],
            ),
            extra: vec![],
            fixed: r(
                "Stay inside the mapped area.",
                &[json!({"behavior": "extend_map", "args": {"x": 30, "y": 15}}), answer("Map extended")],
            ),
        },
        Def {
            spec: "Map the construction yard and report any excavators",
            start: "home",
            goal: all(vec![GoalPredicate::NodeDiscovered("excavator".into()), says("excavator")]),
            faulty: r(
                "Map around the container.",
                &[json!({"behavior": "map_region", "args": {"region": "container_1"}}), answer("no excavator")],
            ),
            extra: vec![],
            fixed: r(
                "Map the yard itself.",
                &[
                    goto("yard"),
                    json!({"behavior": "map_region", "args": {"region": "yard"}}),
                    answer("One excavator present in the yard"),
                ],
            ),
        },
        Def {
            spec: "Is there activity in the southern parking lot?",
            start: "home",
            goal: all(vec![visit("lot_south"), says("activity")]),
            faulty: r("Fly over it.", &[json!({"behavior": "fly", "args": {"node": "lot_south"}})]),
            extra: vec![],
            fixed: r(
                "Drive there.",
                &[goto("lot_south"), answer("Some activity: a vehicle is parked there")],
            ),
        },
        Def {
            spec: "Go back to base",
            start: "yard",
            goal: visit("home"),
            faulty: r("Report first.", &[answer("on my way"), goto("home")]),
            extra: vec![],
            fixed: r("Just drive.", &[goto("home")]),
        },
        Def {
            spec: "Go to the construction yard",
            start: "home",
            goal: visit("yard"),
            faulty: "I would drive north along the road and then turn into the yard.".into(),
            extra: vec![],
            fixed: r("Yard is reachable via road_a.", &[goto("yard")]),
        },
        Def {
            spec: "Drive to the comm tower",
            start: "yard",
            goal: visit("tower"),
            faulty: r("Tower.", &[json!({"behavior": "goto", "args": {}})]),
            extra: vec![],
            fixed: r("Tower is next to the yard.", &[goto("tower")]),
        },
        Def {
            spec: "Inspect the vehicle in the southern lot",
            start: "home",
            goal: says("van"),
            faulty: r(
                "Inspect the car.",
                &[json!({"behavior": "inspect", "args": {"node": "car_9", "query": "what is it?"}})],
            ),
            extra: vec![
                ("inspection result: car_1", r("Report it.", &[answer("A white van with its engine running")])),
                (
                    "car_1 (car)",
                    r(
                        "A car appeared.",
                        &[json!({"behavior": "inspect", "args": {"node": "car_1", "query": "what vehicle is this?"}})],
                    ),
                ),
            ],
            fixed: r("Go look first.", &[goto("lot_south")]),
        },
        Def {
            spec: "Go to the road",
            start: "lot_north",
            goal: visit("road_a"),
            faulty: r("Go quickly.", &[json!({"behavior": "goto", "args": {"node": "road_a", "speed": 3}})]),
            extra: vec![],
            fixed: r("Normal speed.", &[goto("road_a")]),
        },
        Def {
            spec: "Explore the construction yard",
            start: "lot_north",
            goal: all(vec![visit("yard"), says("explored")]),
            faulty: r(
                "Small sweep.",
                &[json!({"behavior": "explore_region", "args": {"region": "yard", "radius_m": -4}})],
            ),
            extra: vec![],
            fixed: r(
                "Positive radius.",
                &[
                    json!({"behavior": "explore_region", "args": {"region": "yard", "radius_m": 4}}),
                    answer("Yard explored"),
                ],
            ),
        },
        Def {
            spec: "Find the excavator",
            start: "home",
            goal: all(vec![GoalPredicate::NodeDiscovered("excavator".into()), says("excavator")]),
            faulty: r("Go straight to it.", &[goto("excavator_1")]),
            extra: vec![],
            fixed: r(
                "It is not mapped yet, map the yard.",
                &[
                    goto("yard"),
                    json!({"behavior": "map_region", "args": {"region": "yard", "classes": ["excavator"]}}),
                    answer("Found the excavator, it is idle"),
                ],
            ),
        },
        Def {
            spec: "Are there cars in the southern lot?",
            start: "home",
            goal: all(vec![GoalPredicate::NodeDiscovered("car".into()), says("car")]),
            faulty: r(
                "Map the field.",
                &[json!({"behavior": "map_region", "args": {"region": "island"}}), answer("no car")],
            ),
            extra: vec![],
            fixed: r(
                "Map the lot.",
                &[json!({"behavior": "map_region", "args": {"region": "lot_south"}}), answer("One car found")],
            ),
        },
        Def {
            spec: "Drive to the southern lot by way of the road",
            start: "home",
            goal: visit("lot_south"),
            faulty: r("Road, then the field.", &[goto("road_a"), goto("island")]),
            extra: vec![],
            fixed: r("Road, then the lot.", &[goto("road_a"), goto("lot_south")]),
        },
        Def {
            spec: "Come home",
            start: "lot_north",
            goal: visit("home"),
            faulty: "```json\n{\"reasoning\": \"home\", \"tasks\": [{\"behavior\": \"goto\", \"args\": {\"node\": \"home\"".into(),
            extra: vec![],
            fixed: r("Home.", &[goto("home")]),
        },
        Def {
            spec: "Move to the yard",
            start: "lot_south",
            goal: visit("yard"),
            faulty: r("Nothing to do.", &[]),
            extra: vec![],
            fixed: r("Drive to the yard.", &[goto("yard")]),
        },
        Def {
            spec: "Extend the map toward the east",
            start: "home",
            goal: says("frontier"),
            faulty: r(
                "The far corner.",
                &[json!({"behavior": "extend_map", "args": {"x": 56, "y": 57}}), answer("frontier pushed")],
            ),
            extra: vec![],
            fixed: r(
                "A reachable point.",
                &[json!({"behavior": "extend_map", "args": {"x": 45, "y": 20}}), answer("frontier pushed east")],
            ),
        },
        Def {
            spec: "Head home, ask if unsure",
            start: "road_a",
            goal: visit("home"),
            faulty: r(
                "Ask, then go.",
                &[json!({"behavior": "clarify", "args": {"question": "which home?"}}), goto("home")],
            ),
            extra: vec![],
            fixed: r("Only one home.", &[goto("home")]),
        },
        Def {
            spec: "Check whether the container is sealed",
            start: "home",
            goal: says("sealed"),
            faulty: r(
                "Look at the field.",
                &[json!({"behavior": "inspect", "args": {"node": "island", "query": "container?"}})],
            ),
            extra: vec![("inspection result: container_1", r("Report.", &[answer("The container is sealed")]))],
            fixed: r(
                "Inspect the container.",
                &[json!({"behavior": "inspect", "args": {"node": "container_1", "query": "is it sealed?"}})],
            ),
        },
    ]
}

/// The twenty built-in missions, ids `R01` to `R20`.
pub fn repair_suite() -> Vec<RepairCase> {
    let base = depot_world();
    defs()
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            let case_id = format!("R{:02}", i + 1);
            let mut scenario = base.clone();
            scenario.id = format!("depot-{case_id}");
            scenario.start_node = id(d.start);
            scenario.goal = d.goal;
            scenario.check().expect("built-in case is valid");
            let mut script = ScriptedClient::default()
                .with_name("repair-script")
                .with_fallback(d.faulty);
            for (when, respond) in d.extra {
                script.rules.push(ScriptRule {
                    when: vec![when.into()],
                    unless: Vec::new(),
                    respond,
                });
            }
            script = script.with_rule(&[FEEDBACK_MARKER], d.fixed);
            RepairCase {
                id: case_id,
                spec: d.spec.into(),
                scenario,
                script,
            }
        })
        .collect()
}

/// Outcome of running the suite under one configuration.
#[derive(Debug, Clone)]
pub struct RepairSummary {
    pub successes: usize,
    pub total: usize,
    pub reports: Vec<(String, MissionReport)>,
}

impl RepairSummary {
    pub fn rate_text(&self) -> String {
        format!("{}/{}", self.successes, self.total)
    }
}

pub fn run_repair_suite(cfg: &LoopConfig) -> RepairSummary {
    let reports: Vec<(String, MissionReport)> = repair_suite()
        .into_iter()
        .map(|c| {
            let mut client = c.script.clone();
            (c.id, run_mission(&c.spec, &c.scenario, &mut client, cfg))
        })
        .collect();
    RepairSummary {
        successes: reports
            .iter()
            .filter(|(_, r)| r.outcome.is_success())
            .count(),
        total: reports.len(),
        reports,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mission::Outcome;
    use crate::plan::system_prompt;

    #[test]
    fn marker_never_appears_outside_history() {
        let w = depot_world();
        assert!(!system_prompt(&w.profile).contains(FEEDBACK_MARKER));
        for c in repair_suite() {
            assert!(!c.spec.contains(FEEDBACK_MARKER));
        }
    }

    #[test]
    fn every_case_needs_feedback() {
        let on = run_repair_suite(&LoopConfig::default());
        for (id, r) in &on.reports {
            assert_eq!(r.outcome, Outcome::Success, "{id}: {}", r.to_json());
            let first = r.trace[0].validation.as_ref().unwrap();
            assert!(!first.ok, "{id} starts with a faulty plan");
        }
        let off = run_repair_suite(&LoopConfig {
            feedback_enabled: false,
            ..LoopConfig::default()
        });
        assert_eq!(on.successes, 20);
        assert_eq!(off.successes, 0);
        for (_, r) in &off.reports {
            assert_eq!(r.outcome, Outcome::FailureValidationExhausted);
        }
    }
}

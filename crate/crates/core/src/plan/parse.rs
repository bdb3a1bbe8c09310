//! Extracting a plan from raw model output.
//!
//! Models interleave prose, draft fragments and fenced code. The last
//! well-formed JSON object that carries a `tasks` key is taken as the plan;
//! failing that, the last JSON object at all (so that schema errors can say
//! what is missing).

use serde_json::Value;

use super::{Action, Plan, PlanError};

struct Block {
    start: usize,
    value: Value,
}

/// Top-level JSON objects embedded in `raw`, in order of appearance.
fn json_objects(raw: &str) -> Vec<Block> {
    let mut out = Vec::new();
    let mut i = 0;
    while let Some(off) = raw[i..].find('{') {
        let start = i + off;
        let mut stream = serde_json::Deserializer::from_str(&raw[start..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(value @ Value::Object(_))) => {
                out.push(Block { start, value });
                i = start + stream.byte_offset();
            }
            _ => i = start + 1,
        }
    }
    out
}

/// Parses model output into a [`Plan`].
pub fn parse_plan(raw: &str) -> Result<Plan, PlanError> {
    let blocks = json_objects(raw);
    let block = blocks
        .iter()
        .rev()
        .find(|b| b.value.get("tasks").is_some())
        .or_else(|| blocks.last())
        .ok_or(PlanError::NoBlock)?;
    let obj = block.value.as_object().expect("only objects are collected");

    let reasoning = match obj.get("reasoning") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Null) | None => preceding_prose(&raw[..block.start]),
        Some(_) => {
            return Err(PlanError::Schema {
                task: None,
                field: "reasoning".into(),
                reason: "expected a string".into(),
            })
        }
    };
    let tasks = match obj.get("tasks") {
        Some(Value::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(i, v)| Action::from_value(v, i))
            .collect::<Result<Vec<_>, _>>()?,
        Some(_) => {
            return Err(PlanError::Schema {
                task: None,
                field: "tasks".into(),
                reason: "expected a list of tasks".into(),
            })
        }
        None => {
            return Err(PlanError::Schema {
                task: None,
                field: "tasks".into(),
                reason: "missing".into(),
            })
        }
    };
    Plan::new(reasoning, tasks)
}

fn preceding_prose(text: &str) -> String {
    let mut lines: Vec<&str> = text.lines().collect();
    while lines
        .last()
        .is_some_and(|l| l.trim().is_empty() || l.trim_start().starts_with("```"))
    {
        lines.pop();
    }
    lines.join("\n").trim().to_string()
}

/// Canonical plan text: sorted keys, no insignificant whitespace. Refuses
/// plans that break the task-list invariants.
pub fn serialize_plan(plan: &Plan) -> Result<String, PlanError> {
    plan.check()?;
    Ok(plan.to_value().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NodeId;
    use proptest::prelude::*;

    #[test]
    fn bare_object() {
        let p = parse_plan(
            r#"{"reasoning":"go home","tasks":[{"behavior":"goto","args":{"node":"home"}}]}"#,
        )
        .unwrap();
        assert_eq!(p.reasoning, "go home");
        assert_eq!(p.tasks, vec![Action::goto("home")]);
    }

    #[test]
    fn prose_and_fence() {
        let raw = "Let me think. The lot is north.\n```json\n{\"reasoning\":\"check the lot\",\"tasks\":[\
                   {\"behavior\":\"goto\",\"args\":{\"node\":\"lot_n\"}},\
                   {\"behavior\":\"map_region\",\"args\":{\"region\":\"lot_n\"}}]}\n```\nDone.";
        let p = parse_plan(raw).unwrap();
        assert_eq!(p.reasoning, "check the lot");
        assert_eq!(p.tasks.len(), 2);
    }

    #[test]
    fn prose_becomes_reasoning_when_field_absent() {
        let raw = "I should go home first.\n```\n{\"tasks\":[{\"behavior\":\"goto\",\"args\":{\"node\":\"home\"}}]}\n```";
        let p = parse_plan(raw).unwrap();
        assert_eq!(p.reasoning, "I should go home first.");
    }

    #[test]
    fn last_block_wins() {
        let raw = r#"draft: {"tasks":[{"behavior":"goto","args":{"node":"a"}}]}
                     final: {"tasks":[{"behavior":"goto","args":{"node":"b"}}]} {"note": 1}"#;
        let p = parse_plan(raw).unwrap();
        assert_eq!(p.tasks, vec![Action::goto("b")]);
    }

    #[test]
    fn unknown_behavior() {
        let err = parse_plan(r#"{"tasks":[{"behavior":"fly","args":{}}]}"#).unwrap_err();
        assert_eq!(err.to_string(), "unknown behavior 'fly' at task 0");
    }

    #[test]
    fn missing_pieces() {
        assert_eq!(parse_plan("no json here").unwrap_err(), PlanError::NoBlock);
        assert_eq!(parse_plan("{not json}").unwrap_err(), PlanError::NoBlock);
        let err = parse_plan(r#"{"plan": []}"#).unwrap_err();
        assert_eq!(err.to_string(), "invalid field 'tasks': missing");
        assert_eq!(
            parse_plan(r#"{"tasks": []}"#).unwrap_err(),
            PlanError::EmptyTasks
        );
    }

    #[test]
    fn serializer_is_canonical_and_refuses_bad_order() {
        let p = Plan::new("r", vec![Action::Answer { text: "yes".into() }]).unwrap();
        let s = serialize_plan(&p).unwrap();
        assert_eq!(
            s,
            r#"{"reasoning":"r","tasks":[{"args":{"text":"yes"},"behavior":"answer"}]}"#
        );
        let bad = Plan {
            reasoning: String::new(),
            tasks: vec![
                Action::Clarify {
                    question: "?".into(),
                },
                Action::goto("home"),
            ],
        };
        assert!(matches!(
            serialize_plan(&bad),
            Err(PlanError::TerminalNotLast { .. })
        ));
    }

    fn arb_id() -> impl Strategy<Value = NodeId> {
        "[a-z][a-z0-9_]{0,8}".prop_map(|s| NodeId::new(s).unwrap())
    }

    fn arb_action() -> impl Strategy<Value = Action> {
        prop_oneof![
            arb_id().prop_map(|node| Action::Goto { node }),
            (
                arb_id(),
                proptest::option::of(proptest::collection::vec("[a-z_]{1,6}", 0..3))
            )
                .prop_map(|(region, classes)| Action::MapRegion { region, classes }),
            (arb_id(), 0.001f64..500.0)
                .prop_map(|(region, radius_m)| Action::ExploreRegion { region, radius_m }),
            (-1e4f64..1e4, -1e4f64..1e4).prop_map(|(x, y)| Action::ExtendMap { x, y }),
            (arb_id(), ".{0,20}").prop_map(|(node, query)| Action::Inspect { node, query }),
        ]
    }

    fn arb_terminal() -> impl Strategy<Value = Option<Action>> {
        proptest::option::of(prop_oneof![
            ".{0,30}".prop_map(|text| Action::Answer { text }),
            ".{0,30}".prop_map(|question| Action::Clarify { question }),
        ])
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn serialize_then_parse_is_identity(
            reasoning in ".{0,40}",
            body in proptest::collection::vec(arb_action(), 0..6),
            terminal in arb_terminal(),
        ) {
            let mut tasks = body;
            tasks.extend(terminal);
            prop_assume!(!tasks.is_empty());
            let plan = Plan::new(reasoning, tasks).unwrap();
            let text = serialize_plan(&plan).unwrap();
            let back = parse_plan(&text).unwrap();
            prop_assert_eq!(&back.tasks, &plan.tasks);
            prop_assert_eq!(back.reasoning, plan.reasoning);
        }

        #[test]
        fn never_panics_on_arbitrary_bytes(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            let s = String::from_utf8_lossy(&bytes);
            let _ = parse_plan(&s);
        }

        #[test]
        fn never_panics_on_jsonish_text(s in r#"[{}\[\]":,a-z0-9 `\n]{0,120}"#) {
            let _ = parse_plan(&s);
        }
    }
}

//! Behavior API: actions, plans, robot profiles, the model-output parser and
//! prompt rendering.

mod parse;
mod profile;
mod prompt;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::graph::NodeId;

pub use parse::{parse_plan, serialize_plan};
pub use profile::{ProfileError, RobotKind, RobotProfile};
pub use prompt::{
    extract_context, extract_graph, extract_history, extract_mission, extract_robot, render_prompt,
    system_prompt, HistoryEntry, Prompt, RobotContext,
};

/// Names of the closed behavior set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    Goto,
    MapRegion,
    ExploreRegion,
    ExtendMap,
    Inspect,
    Answer,
    Clarify,
}

impl Behavior {
    pub const ALL: [Behavior; 7] = [
        Behavior::Goto,
        Behavior::MapRegion,
        Behavior::ExploreRegion,
        Behavior::ExtendMap,
        Behavior::Inspect,
        Behavior::Answer,
        Behavior::Clarify,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Behavior::Goto => "goto",
            Behavior::MapRegion => "map_region",
            Behavior::ExploreRegion => "explore_region",
            Behavior::ExtendMap => "extend_map",
            Behavior::Inspect => "inspect",
            Behavior::Answer => "answer",
            Behavior::Clarify => "clarify",
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Behavior::Answer | Behavior::Clarify)
    }
}

impl fmt::Display for Behavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Behavior {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Behavior::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| s.to_string())
    }
}

/// One call into the behavior API.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Goto {
        node: NodeId,
    },
    MapRegion {
        region: NodeId,
        classes: Option<Vec<String>>,
    },
    ExploreRegion {
        region: NodeId,
        radius_m: f64,
    },
    ExtendMap {
        x: f64,
        y: f64,
    },
    Inspect {
        node: NodeId,
        query: String,
    },
    Answer {
        text: String,
    },
    Clarify {
        question: String,
    },
}

impl Action {
    pub fn goto(node: &str) -> Self {
        Action::Goto {
            node: NodeId::new(node).expect("valid node id"),
        }
    }

    pub fn behavior(&self) -> Behavior {
        match self {
            Action::Goto { .. } => Behavior::Goto,
            Action::MapRegion { .. } => Behavior::MapRegion,
            Action::ExploreRegion { .. } => Behavior::ExploreRegion,
            Action::ExtendMap { .. } => Behavior::ExtendMap,
            Action::Inspect { .. } => Behavior::Inspect,
            Action::Answer { .. } => Behavior::Answer,
            Action::Clarify { .. } => Behavior::Clarify,
        }
    }

    /// The node this action targets, if any.
    pub fn target_node(&self) -> Option<&NodeId> {
        match self {
            Action::Goto { node } | Action::Inspect { node, .. } => Some(node),
            Action::MapRegion { region, .. } | Action::ExploreRegion { region, .. } => Some(region),
            _ => None,
        }
    }

    /// Short target label used in evaluation accept lists and logs.
    pub fn target_label(&self) -> String {
        match self {
            Action::ExtendMap { x, y } => format!("{x},{y}"),
            Action::Answer { .. } | Action::Clarify { .. } => String::new(),
            other => other
                .target_node()
                .map(|n| n.to_string())
                .unwrap_or_default(),
        }
    }

    /// `{"args": {...}, "behavior": <name>}`
    pub fn to_value(&self) -> Value {
        let args = match self {
            Action::Goto { node } => json!({ "node": node.as_str() }),
            Action::MapRegion { region, classes } => match classes {
                Some(c) => json!({ "region": region.as_str(), "classes": c }),
                None => json!({ "region": region.as_str() }),
            },
            Action::ExploreRegion { region, radius_m } => {
                json!({ "region": region.as_str(), "radius_m": radius_m })
            }
            Action::ExtendMap { x, y } => json!({ "x": x, "y": y }),
            Action::Inspect { node, query } => json!({ "node": node.as_str(), "query": query }),
            Action::Answer { text } => json!({ "text": text }),
            Action::Clarify { question } => json!({ "question": question }),
        };
        json!({ "behavior": self.behavior().name(), "args": args })
    }

    /// Parses one task object. `index` is only used in error messages.
    pub fn from_value(v: &Value, index: usize) -> Result<Action, PlanError> {
        let schema = |field: &str, reason: String| PlanError::Schema {
            task: Some(index),
            field: field.to_string(),
            reason,
        };
        let obj = v
            .as_object()
            .ok_or_else(|| schema("task", format!("expected an object, found {}", kind_of(v))))?;
        let name = match obj.get("behavior") {
            Some(Value::String(s)) => s.as_str(),
            Some(other) => {
                return Err(schema(
                    "behavior",
                    format!("expected a string, found {}", kind_of(other)),
                ))
            }
            None => return Err(schema("behavior", "missing".into())),
        };
        let behavior: Behavior = name
            .parse()
            .map_err(|name| PlanError::UnknownBehavior { name, task: index })?;
        let empty = Map::new();
        let args = match obj.get("args") {
            Some(Value::Object(m)) => m,
            None | Some(Value::Null) => &empty,
            Some(other) => {
                return Err(schema(
                    "args",
                    format!("expected an object, found {}", kind_of(other)),
                ))
            }
        };
        let mut reader = ArgReader {
            args,
            index,
            behavior,
        };
        let action = match behavior {
            Behavior::Goto => Action::Goto {
                node: reader.node("node")?,
            },
            Behavior::MapRegion => Action::MapRegion {
                region: reader.node("region")?,
                classes: reader.opt_strings("classes")?,
            },
            Behavior::ExploreRegion => {
                let region = reader.node("region")?;
                let radius_m = reader.number("radius_m")?;
                if radius_m <= 0.0 {
                    return Err(schema(
                        "args.radius_m",
                        format!("must be positive, got {radius_m}"),
                    ));
                }
                Action::ExploreRegion { region, radius_m }
            }
            Behavior::ExtendMap => Action::ExtendMap {
                x: reader.number("x")?,
                y: reader.number("y")?,
            },
            Behavior::Inspect => Action::Inspect {
                node: reader.node("node")?,
                query: reader.string("query")?,
            },
            Behavior::Answer => Action::Answer {
                text: reader.string("text")?,
            },
            Behavior::Clarify => Action::Clarify {
                question: reader.string("question")?,
            },
        };
        reader.finish()?;
        Ok(action)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Goto { node } => write!(f, "goto({node})"),
            Action::MapRegion {
                region,
                classes: None,
            } => write!(f, "map_region({region})"),
            Action::MapRegion {
                region,
                classes: Some(c),
            } => write!(f, "map_region({region}, [{}])", c.join(", ")),
            Action::ExploreRegion { region, radius_m } => {
                write!(f, "explore_region({region}, {radius_m})")
            }
            Action::ExtendMap { x, y } => write!(f, "extend_map({x}, {y})"),
            Action::Inspect { node, query } => write!(f, "inspect({node}, {query:?})"),
            Action::Answer { text } => write!(f, "answer({text:?})"),
            Action::Clarify { question } => write!(f, "clarify({question:?})"),
        }
    }
}

impl Serialize for Action {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_value().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Action {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        Action::from_value(&v, 0).map_err(serde::de::Error::custom)
    }
}

struct ArgReader<'a> {
    args: &'a Map<String, Value>,
    index: usize,
    behavior: Behavior,
}

impl ArgReader<'_> {
    fn err(&self, name: &str, reason: String) -> PlanError {
        PlanError::Schema {
            task: Some(self.index),
            field: format!("args.{name}"),
            reason,
        }
    }

    fn get(&self, name: &str) -> Result<&Value, PlanError> {
        self.args
            .get(name)
            .ok_or_else(|| self.err(name, format!("missing for {}", self.behavior)))
    }

    fn string(&mut self, name: &str) -> Result<String, PlanError> {
        match self.get(name)? {
            Value::String(s) => Ok(s.clone()),
            other => Err(self.err(name, format!("expected a string, found {}", kind_of(other)))),
        }
    }

    fn node(&mut self, name: &str) -> Result<NodeId, PlanError> {
        let s = self.string(name)?;
        NodeId::new(s.clone()).map_err(|_| self.err(name, format!("'{s}' is not a valid node id")))
    }

    fn number(&mut self, name: &str) -> Result<f64, PlanError> {
        match self.get(name)? {
            Value::Number(n) => n
                .as_f64()
                .filter(|v| v.is_finite())
                .ok_or_else(|| self.err(name, "expected a finite number".into())),
            other => Err(self.err(name, format!("expected a number, found {}", kind_of(other)))),
        }
    }

    fn opt_strings(&mut self, name: &str) -> Result<Option<Vec<String>>, PlanError> {
        match self.args.get(name) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    Value::String(s) => Ok(s.clone()),
                    other => {
                        Err(self.err(name, format!("expected strings, found {}", kind_of(other))))
                    }
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
            Some(other) => Err(self.err(
                name,
                format!("expected a list of strings, found {}", kind_of(other)),
            )),
        }
    }

    fn finish(self) -> Result<(), PlanError> {
        let allowed: &[&str] = match self.behavior {
            Behavior::Goto => &["node"],
            Behavior::MapRegion => &["region", "classes"],
            Behavior::ExploreRegion => &["region", "radius_m"],
            Behavior::ExtendMap => &["x", "y"],
            Behavior::Inspect => &["node", "query"],
            Behavior::Answer => &["text"],
            Behavior::Clarify => &["question"],
        };
        match self.args.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(extra) => {
                Err(self.err(extra, format!("unexpected argument for {}", self.behavior)))
            }
            None => Ok(()),
        }
    }
}

fn kind_of(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "a list",
        Value::Object(_) => "an object",
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("no plan object found in model output")]
    NoBlock,
    #[error("unknown behavior '{name}' at task {task}")]
    UnknownBehavior { name: String, task: usize },
    #[error("{}", schema_message(.task, .field, .reason))]
    Schema {
        task: Option<usize>,
        field: String,
        reason: String,
    },
    #[error("plan has no tasks")]
    EmptyTasks,
    #[error("'{behavior}' at task {task} must be the last task")]
    TerminalNotLast { behavior: Behavior, task: usize },
}

fn schema_message(task: &Option<usize>, field: &str, reason: &str) -> String {
    match task {
        Some(i) => format!("invalid field '{field}' at task {i}: {reason}"),
        None => format!("invalid field '{field}': {reason}"),
    }
}

impl PlanError {
    /// Task the error refers to (0 when it concerns the plan as a whole).
    pub fn task_index(&self) -> usize {
        match self {
            PlanError::UnknownBehavior { task, .. } | PlanError::TerminalNotLast { task, .. } => {
                *task
            }
            PlanError::Schema { task, .. } => task.unwrap_or(0),
            PlanError::NoBlock | PlanError::EmptyTasks => 0,
        }
    }

    /// The offending identifier, quoted verbatim in feedback.
    pub fn subject(&self) -> String {
        match self {
            PlanError::UnknownBehavior { name, .. } => name.clone(),
            PlanError::Schema { field, .. } => field.clone(),
            PlanError::TerminalNotLast { behavior, .. } => behavior.name().to_string(),
            PlanError::EmptyTasks => "tasks".into(),
            PlanError::NoBlock => "plan".into(),
        }
    }
}

/// Chain-of-thought text plus an ordered, non-empty task list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub reasoning: String,
    pub tasks: Vec<Action>,
}

impl Plan {
    pub fn new(reasoning: impl Into<String>, tasks: Vec<Action>) -> Result<Self, PlanError> {
        let plan = Plan {
            reasoning: reasoning.into(),
            tasks,
        };
        plan.check()?;
        Ok(plan)
    }

    /// Non-empty, and answer/clarify may only appear once, as the last task.
    pub fn check(&self) -> Result<(), PlanError> {
        if self.tasks.is_empty() {
            return Err(PlanError::EmptyTasks);
        }
        let last = self.tasks.len() - 1;
        for (i, t) in self.tasks.iter().enumerate() {
            if t.behavior().is_terminal() && i != last {
                return Err(PlanError::TerminalNotLast {
                    behavior: t.behavior(),
                    task: i,
                });
            }
        }
        Ok(())
    }

    pub fn to_value(&self) -> Value {
        json!({
            "reasoning": self.reasoning,
            "tasks": self.tasks.iter().map(Action::to_value).collect::<Vec<_>>(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn behavior_names_round_trip() {
        for b in Behavior::ALL {
            assert_eq!(b.name().parse::<Behavior>().unwrap(), b);
        }
        assert_eq!("fly".parse::<Behavior>(), Err("fly".to_string()));
    }

    #[test]
    fn terminal_rules() {
        let answer = Action::Answer {
            text: "done".into(),
        };
        assert!(Plan::new("", vec![answer.clone()]).is_ok());
        let err = Plan::new(
            "",
            vec![
                Action::Clarify {
                    question: "which lot?".into(),
                },
                Action::goto("home"),
            ],
        )
        .unwrap_err();
        assert_eq!(err.to_string(), "'clarify' at task 0 must be the last task");
        assert_eq!(Plan::new("", vec![]).unwrap_err(), PlanError::EmptyTasks);
        let err = Plan::new("", vec![answer.clone(), answer]).unwrap_err();
        assert!(matches!(err, PlanError::TerminalNotLast { task: 0, .. }));
    }

    #[test]
    fn arg_schema_errors_name_field_and_task() {
        let v = json!({"behavior":"explore_region","args":{"region":"lot","radius_m":-1}});
        let err = Action::from_value(&v, 2).unwrap_err();
        assert_eq!(
            err.to_string(),
            "invalid field 'args.radius_m' at task 2: must be positive, got -1"
        );
        let v = json!({"behavior":"goto","args":{"node":"lot","speed":3}});
        let err = Action::from_value(&v, 0).unwrap_err();
        assert_eq!(err.subject(), "args.speed");
        let v = json!({"behavior":"goto","args":{"node":"North Lot"}});
        let err = Action::from_value(&v, 1).unwrap_err();
        assert!(err
            .to_string()
            .contains("'North Lot' is not a valid node id"));
        let v = json!({"behavior":"inspect","args":{"node":"lot"}});
        assert!(Action::from_value(&v, 0)
            .unwrap_err()
            .to_string()
            .contains("args.query"));
    }

    #[test]
    fn map_region_classes_optional() {
        let v = json!({"behavior":"map_region","args":{"region":"lot","classes":null}});
        assert_eq!(
            Action::from_value(&v, 0).unwrap(),
            Action::MapRegion {
                region: NodeId::new("lot").unwrap(),
                classes: None
            }
        );
        let v = json!({"behavior":"map_region","args":{"region":"lot","classes":["car"]}});
        let a = Action::from_value(&v, 0).unwrap();
        assert_eq!(Action::from_value(&a.to_value(), 0).unwrap(), a);
    }
}

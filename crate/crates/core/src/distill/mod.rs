//! Distillation: turning expert planner runs into a chat-format corpus and
//! scoring smaller planners against labelled cases.

mod collect;
mod eval;
mod expert;
mod specs;
mod synth;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point;
use crate::grid::GridGeometry;
use crate::plan::{extract_context, extract_graph, parse_plan, RobotProfile};
use crate::validate::{KnownOccupancy, ValidationReport, Validator};

pub use collect::{collect, CollectItem, CollectReport};
pub use eval::{
    evaluate, format_rate, load_eval_cases, CaseResult, EvalCase, EvalReport, Expected,
};
pub use expert::GreedyExpert;
pub use specs::{generate_specs, generate_specs_with_model, spec_prompt};
pub use synth::synth_world;

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}, line {line}: {reason}")]
    Corpus {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("malformed record: {0}")]
    Record(String),
    #[error("invalid evaluation case {index}: {reason}")]
    Case { index: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub scenario_id: String,
    pub iteration: u32,
    pub expert_model: String,
    /// Needed to re-check geofences and behavior sets later.
    #[serde(default)]
    pub profile: RobotProfile,
}

/// One supervised example: the prompt the expert saw and the plan it gave.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub messages: Vec<ChatMessage>,
    pub meta: RecordMeta,
}

impl DatasetRecord {
    pub fn new(system: String, user: String, assistant: String, meta: RecordMeta) -> Self {
        let msg = |role, content| ChatMessage { role, content };
        Self {
            messages: vec![
                msg(Role::System, system),
                msg(Role::User, user),
                msg(Role::Assistant, assistant),
            ],
            meta,
        }
    }

    fn message(&self, role: Role) -> Result<&str, DistillError> {
        self.messages
            .iter()
            .find(|m| m.role == role)
            .map(|m| m.content.as_str())
            .ok_or_else(|| DistillError::Record(format!("no {role:?} message").to_lowercase()))
    }

    pub fn user(&self) -> Result<&str, DistillError> {
        self.message(Role::User)
    }

    pub fn assistant(&self) -> Result<&str, DistillError> {
        self.message(Role::Assistant)
    }
}

/// A single-cell grid. Only its geometry is ever consulted, and only when
/// the grid check is on.
fn no_grid() -> KnownOccupancy {
    KnownOccupancy::unknown(
        GridGeometry::new(1, 1, 1.0, Point::new(0.0, 0.0)).expect("valid geometry"),
    )
}

/// Re-checks a record's plan against the graph and robot embedded in its
/// user message. The prompt carries no occupancy grid, so the grid check is
/// skipped.
pub fn revalidate_record(rec: &DatasetRecord) -> Result<ValidationReport, DistillError> {
    let user = rec.user()?;
    let graph = extract_graph(user).map_err(|e| DistillError::Record(e.to_string()))?;
    let ctx =
        extract_context(user).ok_or_else(|| DistillError::Record("no robot section".into()))?;
    let plan = parse_plan(rec.assistant()?).map_err(|e| DistillError::Record(e.to_string()))?;
    let v = Validator {
        skip_explorable: true,
        ..Validator::default()
    };
    Ok(v.validate(&plan, &graph, &ctx, &no_grid(), &rec.meta.profile))
}

/// One compact JSON object per line, newline terminated.
pub fn corpus_to_jsonl(records: &[DatasetRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn corpus_from_jsonl(text: &str, path: &Path) -> Result<Vec<DatasetRecord>, DistillError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| DistillError::Corpus {
                path: path.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

pub fn export_corpus(
    records: &[DatasetRecord],
    path: impl AsRef<Path>,
) -> Result<(), DistillError> {
    let path = path.as_ref();
    fs::write(path, corpus_to_jsonl(records)).map_err(|source| DistillError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn import_corpus(path: impl AsRef<Path>) -> Result<Vec<DatasetRecord>, DistillError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DistillError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    corpus_from_jsonl(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, Node, SemanticGraph};
    use crate::plan::{render_prompt, serialize_plan, Action, Plan, RobotContext};

    fn record(tasks: Vec<Action>) -> DatasetRecord {
        let g = SemanticGraph::new(
            vec![
                Node::region("home", "base", 0.0, 0.0).unwrap(),
                Node::region("lot", "parking_lot", 30.0, 0.0).unwrap(),
                Node::region("pond", "water", 90.0, 90.0).unwrap(),
            ],
            vec![Edge::traversability("home", "lot").unwrap()],
        )
        .unwrap();
        let ctx = RobotContext {
            at: crate::graph::NodeId::new("home").unwrap(),
            pose: Point::new(0.0, 0.0),
        };
        let p = render_prompt("go", &g, &RobotProfile::ugv(), &ctx, &[]);
        let plan = serialize_plan(&Plan::new("r", tasks).unwrap()).unwrap();
        DatasetRecord::new(
            p.system,
            p.user,
            plan,
            RecordMeta {
                scenario_id: "s".into(),
                iteration: 1,
                expert_model: "e".into(),
                profile: RobotProfile::ugv(),
            },
        )
    }

    #[test]
    fn revalidation_uses_embedded_graph() {
        assert!(
            revalidate_record(&record(vec![Action::goto("lot")]))
                .unwrap()
                .ok
        );
        let bad = revalidate_record(&record(vec![Action::goto("pond")])).unwrap();
        assert!(!bad.ok);
    }

    #[test]
    fn corpus_round_trips_through_a_file() {
        let recs = vec![
            record(vec![Action::goto("lot")]),
            record(vec![Action::goto("home")]),
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        export_corpus(&recs, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.ends_with('\n'));
        assert_eq!(import_corpus(&path).unwrap(), recs);
    }

    #[test]
    fn bad_corpus_line_is_located() {
        let err = corpus_from_jsonl("{}\n", Path::new("x.jsonl")).unwrap_err();
        assert!(err.to_string().starts_with("x.jsonl, line 1"), "{err}");
        let err = import_corpus("/nonexistent/c.jsonl").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/c.jsonl"));
    }
}

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{no_grid, DistillError};
use crate::graph::{NodeId, SemanticGraph};
use crate::mission::ModelClient;
use crate::plan::{parse_plan, render_prompt, Behavior, RobotContext, RobotProfile};
use crate::validate::Validator;

/// An acceptable first task. A missing target accepts any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expected {
    pub behavior: Behavior,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

/// One labelled prompt: the planner passes if its plan parses, validates
/// and starts with one of the accepted tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCase {
    pub spec: String,
    pub graph: SemanticGraph,
    pub robot_at: NodeId,
    pub accept: Vec<Expected>,
    #[serde(default)]
    pub profile: RobotProfile,
}

impl EvalCase {
    fn check(&self, index: usize) -> Result<(), DistillError> {
        let bad = |reason: String| DistillError::Case { index, reason };
        if self.graph.node(&self.robot_at).is_none() {
            return Err(bad(format!(
                "robot_at '{}' is not in the graph",
                self.robot_at
            )));
        }
        if self.accept.is_empty() {
            return Err(bad("accept list is empty".into()));
        }
        self.profile.check().map_err(|e| bad(e.to_string()))
    }

    fn context(&self) -> RobotContext {
        let pose = self.graph.node(&self.robot_at).expect("checked").position;
        RobotContext {
            at: self.robot_at.clone(),
            pose,
        }
    }
}

/// Reads a JSON array of cases.
pub fn load_eval_cases(path: impl AsRef<Path>) -> Result<Vec<EvalCase>, DistillError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DistillError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let cases: Vec<EvalCase> = serde_json::from_str(&text).map_err(|e| DistillError::Corpus {
        path: path.to_path_buf(),
        line: e.line(),
        reason: e.to_string(),
    })?;
    for (i, c) in cases.iter().enumerate() {
        c.check(i)?;
    }
    Ok(cases)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub index: usize,
    pub spec: String,
    pub passes: usize,
    pub trials: usize,
    /// Reason for each failed trial, in trial order.
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    /// Percent, rounded to one decimal.
    pub success_rate: f64,
    pub per_case: Vec<CaseResult>,
}

/// `72.7 %`, or `100 %` when the rate is whole.
pub fn format_rate(rate: f64) -> String {
    let r = (rate * 10.0).round() / 10.0;
    if r.fract() == 0.0 {
        format!("{r:.0} %")
    } else {
        format!("{r:.1} %")
    }
}

impl EvalReport {
    pub fn rate_text(&self) -> String {
        format_rate(self.success_rate)
    }

    pub fn table(&self) -> String {
        format!(
            "| Planner | Success rate |\n|---|---|\n| {} | {} |\n",
            self.model,
            self.rate_text()
        )
    }
}

pub const REASON_TRANSPORT: &str = "transport error";
pub const REASON_PARSE: &str = "parse error";
pub const REASON_VALIDATION: &str = "validation failed";
pub const REASON_FIRST_TASK: &str = "wrong first task";

fn trial(client: &mut dyn ModelClient, case: &EvalCase) -> Result<(), &'static str> {
    let ctx = case.context();
    let prompt = render_prompt(&case.spec, &case.graph, &case.profile, &ctx, &[]);
    let raw = client.complete(&prompt).map_err(|e| {
        tracing::debug!(error = %e, "evaluation call failed");
        REASON_TRANSPORT
    })?;
    let plan = parse_plan(&raw).map_err(|_| REASON_PARSE)?;
    let v = Validator {
        skip_explorable: true,
        ..Validator::default()
    };
    if !v
        .validate(&plan, &case.graph, &ctx, &no_grid(), &case.profile)
        .ok
    {
        return Err(REASON_VALIDATION);
    }
    let first = &plan.tasks[0];
    let label = first.target_label();
    let hit = case
        .accept
        .iter()
        .any(|e| e.behavior == first.behavior() && e.target.as_ref().is_none_or(|t| *t == label));
    if hit {
        Ok(())
    } else {
        Err(REASON_FIRST_TASK)
    }
}

/// Runs every case `repeats` times (at least once). Trials run in case
/// order, all repeats of a case back to back.
pub fn evaluate(client: &mut dyn ModelClient, cases: &[EvalCase], repeats: usize) -> EvalReport {
    let repeats = repeats.max(1);
    let mut per_case = Vec::new();
    let (mut passes, mut trials) = (0, 0);
    for (index, case) in cases.iter().enumerate() {
        let mut r = CaseResult {
            index,
            spec: case.spec.clone(),
            passes: 0,
            trials: repeats,
            failures: Vec::new(),
        };
        for _ in 0..repeats {
            match trial(client, case) {
                Ok(()) => r.passes += 1,
                Err(reason) => r.failures.push(reason.to_string()),
            }
        }
        passes += r.passes;
        trials += r.trials;
        per_case.push(r);
    }
    let rate = if trials == 0 {
        0.0
    } else {
        100.0 * passes as f64 / trials as f64
    };
    EvalReport {
        model: client.name().to_string(),
        success_rate: (rate * 10.0).round() / 10.0,
        per_case,
    }
}

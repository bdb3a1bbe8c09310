use serde::{Deserialize, Serialize};

use super::client::ModelClient;
use crate::geometry::Point;
use crate::graph::{GraphDiff, NodeId, SemanticGraph};
use crate::plan::{parse_plan, render_prompt, Action, HistoryEntry, Plan};
use crate::sim::{
    execute, in_comms, return_to_comms, RobotState, SimEvent, StepResult, WorldScenario,
};
use crate::validate::{ValidationReport, Validator};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub max_iterations: u32,
    /// Planning attempts allowed per iteration, the first one included.
    pub max_validation_retries: u32,
    pub feedback_enabled: bool,
    pub comm_gating: bool,
    /// Stop executing a plan as soon as it produces new information.
    pub replan_on_diff: bool,
    pub seed: u64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            max_iterations: 20,
            max_validation_retries: 3,
            feedback_enabled: true,
            comm_gating: true,
            replan_on_diff: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    FailureMaxIterations,
    FailureComm,
    FailureModelError,
    FailureValidationExhausted,
    /// A terminal task ran but the goal does not hold.
    FailureGoalNotMet,
    /// The robot asked a question and nobody answered.
    FailureClarification,
    /// The executor refused a validated action.
    FailureExecution,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::FailureMaxIterations => "failure_max_iterations",
            Outcome::FailureComm => "failure_comm",
            Outcome::FailureModelError => "failure_model_error",
            Outcome::FailureValidationExhausted => "failure_validation_exhausted",
            Outcome::FailureGoalNotMet => "failure_goal_not_met",
            Outcome::FailureClarification => "failure_clarification",
            Outcome::FailureExecution => "failure_execution",
        }
    }

    pub fn is_success(self) -> bool {
        self == Outcome::Success
    }
}

/// One executed task (or a return to comms when `action` is absent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<Action>,
    pub result: StepResult,
}

/// One planning attempt, or a return to comms ahead of planning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: u32,
    pub attempt: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<Plan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationReport>,
    #[serde(default)]
    pub steps: Vec<StepRecord>,
}

impl TraceRecord {
    fn new(iteration: u32, attempt: u32) -> Self {
        Self {
            iteration,
            attempt,
            prompt_digest: None,
            raw_response: None,
            error: None,
            plan: None,
            validation: None,
            steps: Vec::new(),
        }
    }
}

pub const FAILURE_OBSTACLE: &str = "Obst. det.";
pub const FAILURE_ODOMETRY: &str = "Odometry";
pub const FAILURE_COMMS: &str = "Comms";

/// Reported odometry further than this fraction from the truth counts as an
/// odometry failure.
pub const ODOMETRY_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionReport {
    pub scenario_id: String,
    pub spec: String,
    pub client: String,
    pub outcome: Outcome,
    pub distance_m: f64,
    pub reported_distance_m: f64,
    pub iterations: u32,
    pub llm_calls: u32,
    pub answer: Option<String>,
    pub failure_modes: Vec<String>,
    pub trace: Vec<TraceRecord>,
}

impl MissionReport {
    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// One trace record per line.
    pub fn trace_jsonl(&self) -> String {
        self.trace
            .iter()
            .map(|r| serde_json::to_string(r).expect("trace serializes") + "\n")
            .collect()
    }
}

/// Progress notifications, in the order things happen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum LoopEvent {
    PlanProposed {
        iteration: u32,
        attempt: u32,
        plan: Plan,
    },
    ValidationFailed {
        iteration: u32,
        attempt: u32,
        feedback: String,
        report: ValidationReport,
    },
    TaskStarted {
        task_index: usize,
        action: Action,
    },
    TaskFinished {
        task_index: Option<usize>,
        at: NodeId,
        pose: Point,
        distance_m: f64,
        odometer_m: f64,
    },
    MapDiff {
        diff: GraphDiff,
        text: String,
    },
    CommEvent {
        event: SimEvent,
    },
    Clarification {
        question: String,
    },
    Answered {
        text: String,
    },
    Done {
        outcome: Outcome,
        distance_m: f64,
    },
}

/// Where a session stands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum Phase {
    Planning,
    AwaitingApproval { plan: Plan },
    AwaitingOperator { question: String },
    Done { outcome: Outcome },
}

/// A resumable mission: plan, optionally wait for approval, execute, repeat.
#[derive(Debug, Clone)]
pub struct MissionSession {
    spec: String,
    world: WorldScenario,
    cfg: LoopConfig,
    step_mode: bool,
    state: RobotState,
    history: Vec<HistoryEntry>,
    phase: Phase,
    iterations: u32,
    llm_calls: u32,
    answer: Option<String>,
    trace: Vec<TraceRecord>,
    events: Vec<LoopEvent>,
    saw_blocked: bool,
    saw_comm_loss: bool,
    client_name: String,
}

impl MissionSession {
    pub fn new(spec: impl Into<String>, world: WorldScenario, cfg: LoopConfig) -> Self {
        let state = world.initial_state();
        Self {
            spec: spec.into(),
            world,
            cfg,
            step_mode: false,
            state,
            history: Vec::new(),
            phase: Phase::Planning,
            iterations: 0,
            llm_calls: 0,
            answer: None,
            trace: Vec::new(),
            events: Vec::new(),
            saw_blocked: false,
            saw_comm_loss: false,
            client_name: String::new(),
        }
    }

    /// Require [`MissionSession::approve`] before each plan runs.
    pub fn with_step_mode(mut self, on: bool) -> Self {
        self.step_mode = on;
        self
    }

    pub fn phase(&self) -> &Phase {
        &self.phase
    }

    pub fn is_done(&self) -> bool {
        matches!(self.phase, Phase::Done { .. })
    }

    pub fn state(&self) -> &RobotState {
        &self.state
    }

    pub fn known(&self) -> &SemanticGraph {
        &self.state.known
    }

    pub fn world(&self) -> &WorldScenario {
        &self.world
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    /// Takes the events produced since the last call.
    pub fn drain_events(&mut self) -> Vec<LoopEvent> {
        std::mem::take(&mut self.events)
    }

    /// Appends an operator message. A session waiting on a clarification
    /// goes back to planning.
    pub fn post_operator(&mut self, text: impl Into<String>) {
        self.history.push(HistoryEntry::Operator(text.into()));
        if matches!(self.phase, Phase::AwaitingOperator { .. }) {
            self.phase = Phase::Planning;
        }
    }

    /// Runs the pending approved plan.
    pub fn approve(&mut self) -> &Phase {
        if let Phase::AwaitingApproval { plan } = &self.phase {
            let plan = plan.clone();
            self.execute_plan(&plan);
        }
        &self.phase
    }

    /// Advances by one planning iteration, executing the plan unless step
    /// mode holds it for approval.
    pub fn step(&mut self, client: &mut dyn ModelClient) -> &Phase {
        if self.phase != Phase::Planning {
            return &self.phase;
        }
        if self.client_name.is_empty() {
            self.client_name = client.name().to_string();
        }
        if self.iterations >= self.cfg.max_iterations {
            self.finish(Outcome::FailureMaxIterations);
            return &self.phase;
        }
        self.iterations += 1;
        let iteration = self.iterations;

        if self.cfg.comm_gating && !in_comms(&self.world, self.state.pose, self.state.step) {
            match return_to_comms(&self.world, &self.state) {
                Ok((next, result)) => {
                    let mut rec = TraceRecord::new(iteration, 0);
                    let (_, step) = self.absorb(next, None, None, result);
                    rec.steps.push(step);
                    self.trace.push(rec);
                    if !in_comms(&self.world, self.state.pose, self.state.step) {
                        return &self.phase;
                    }
                }
                Err(e) => {
                    let mut rec = TraceRecord::new(iteration, 0);
                    rec.error = Some(e.to_string());
                    self.trace.push(rec);
                    self.finish(Outcome::FailureComm);
                    return &self.phase;
                }
            }
        }

        let mut approved = None;
        for attempt in 1..=self.cfg.max_validation_retries.max(1) {
            let prompt = render_prompt(
                &self.spec,
                &self.state.known,
                &self.world.profile,
                &self.state.context(),
                &self.history,
            );
            let mut rec = TraceRecord::new(iteration, attempt);
            rec.prompt_digest = Some(prompt.digest());
            self.llm_calls += 1;
            let raw = match client.complete(&prompt) {
                Ok(raw) => raw,
                Err(e) => {
                    rec.error = Some(e.to_string());
                    self.trace.push(rec);
                    self.finish(Outcome::FailureModelError);
                    return &self.phase;
                }
            };
            let report = match parse_plan(&raw) {
                Ok(plan) => {
                    let report = Validator::default().validate(
                        &plan,
                        &self.state.known,
                        &self.state.context(),
                        &self.state.known_occ,
                        &self.world.profile,
                    );
                    self.events.push(LoopEvent::PlanProposed {
                        iteration,
                        attempt,
                        plan: plan.clone(),
                    });
                    rec.plan = Some(plan);
                    report
                }
                Err(e) => ValidationReport::from_parse_error(&e),
            };
            rec.raw_response = Some(raw);
            if report.ok {
                approved = rec.plan.clone();
                rec.validation = Some(report);
                self.trace.push(rec);
                break;
            }
            self.events.push(LoopEvent::ValidationFailed {
                iteration,
                attempt,
                feedback: report.feedback_text.clone(),
                report: report.clone(),
            });
            if self.cfg.feedback_enabled {
                self.history
                    .push(HistoryEntry::Feedback(report.feedback_text.clone()));
            }
            rec.validation = Some(report);
            self.trace.push(rec);
        }

        match approved {
            None => self.finish(Outcome::FailureValidationExhausted),
            Some(plan) if self.step_mode => self.phase = Phase::AwaitingApproval { plan },
            Some(plan) => self.execute_plan(&plan),
        }
        &self.phase
    }

    fn execute_plan(&mut self, plan: &Plan) {
        self.phase = Phase::Planning;
        for (i, task) in plan.tasks.iter().enumerate() {
            self.events.push(LoopEvent::TaskStarted {
                task_index: i,
                action: task.clone(),
            });
            let (next, result) = match execute(task, &self.world, &self.state) {
                Ok(r) => r,
                Err(e) => {
                    if let Some(rec) = self.trace.last_mut() {
                        rec.error = Some(e.to_string());
                    }
                    self.finish(Outcome::FailureExecution);
                    return;
                }
            };
            let blocked = result.blocked();
            let (done, goal_met) = (result.done, result.goal_met);
            let (new_info, step) = self.absorb(next, Some(i), Some(task.clone()), result);
            match self.trace.last_mut() {
                Some(rec) => rec.steps.push(step),
                None => {
                    let mut rec = TraceRecord::new(self.iterations, 0);
                    rec.steps.push(step);
                    self.trace.push(rec);
                }
            }
            if done {
                match task {
                    Action::Answer { text } => self.answer = Some(text.clone()),
                    Action::Clarify { question } if !goal_met => {
                        self.phase = Phase::AwaitingOperator {
                            question: question.clone(),
                        };
                        return;
                    }
                    _ => {}
                }
                let outcome = if goal_met {
                    Outcome::Success
                } else {
                    Outcome::FailureGoalNotMet
                };
                self.finish(outcome);
                return;
            }
            if blocked || (self.cfg.replan_on_diff && new_info) {
                return;
            }
        }
    }

    /// Folds a step into the session. Returns whether the step produced new
    /// information for the planner, and the record for the trace.
    fn absorb(
        &mut self,
        next: RobotState,
        task_index: Option<usize>,
        action: Option<Action>,
        result: StepResult,
    ) -> (bool, StepRecord) {
        self.state = next;
        let mut new_info = false;
        for ev in &result.events {
            match ev {
                SimEvent::CommLost | SimEvent::CommRestored => {
                    self.saw_comm_loss |= *ev == SimEvent::CommLost;
                    self.events.push(LoopEvent::CommEvent { event: ev.clone() });
                }
                SimEvent::BlockedByObstacle(_) => self.saw_blocked = true,
                SimEvent::InspectionResult(_) => new_info = true,
                SimEvent::MissionAnswered(text) => {
                    self.events.push(LoopEvent::Answered { text: text.clone() })
                }
                SimEvent::ClarificationRequested(q) => self.events.push(LoopEvent::Clarification {
                    question: q.clone(),
                }),
            }
            if let Some(obs) = ev.observation() {
                self.history.push(HistoryEntry::Observation(obs));
            }
        }
        if !result.diff.is_empty() {
            let text = result.diff.render_text();
            self.history.push(HistoryEntry::MapUpdate(text.clone()));
            self.events.push(LoopEvent::MapDiff {
                diff: result.diff.clone(),
                text,
            });
            new_info = true;
        }
        self.events.push(LoopEvent::TaskFinished {
            task_index,
            at: self.state.at.clone(),
            pose: self.state.pose,
            distance_m: result.distance_m,
            odometer_m: self.state.odometer_m,
        });
        (
            new_info,
            StepRecord {
                task_index,
                action,
                result,
            },
        )
    }

    /// Ends a session that is not done, with the outcome [`Self::report`]
    /// would give it.
    pub fn abandon(&mut self) {
        if !self.is_done() {
            let outcome = self.report().outcome;
            self.finish(outcome);
        }
    }

    fn finish(&mut self, outcome: Outcome) {
        self.phase = Phase::Done { outcome };
        self.events.push(LoopEvent::Done {
            outcome,
            distance_m: self.state.odometer_m,
        });
    }

    fn failure_modes(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.saw_blocked {
            out.push(FAILURE_OBSTACLE.to_string());
        }
        let truth = self.state.odometer_m;
        if (self.state.reported_odometer_m - truth).abs()
            > ODOMETRY_TOLERANCE * truth.max(f64::MIN_POSITIVE)
        {
            out.push(FAILURE_ODOMETRY.to_string());
        }
        if self.saw_comm_loss {
            out.push(FAILURE_COMMS.to_string());
        }
        out
    }

    /// The report so far. Sessions that have not finished report the
    /// outcome they would have if stopped now.
    pub fn report(&self) -> MissionReport {
        let outcome = match &self.phase {
            Phase::Done { outcome } => *outcome,
            Phase::AwaitingOperator { .. } => Outcome::FailureClarification,
            _ => Outcome::FailureMaxIterations,
        };
        MissionReport {
            scenario_id: self.world.id.clone(),
            spec: self.spec.clone(),
            client: self.client_name.clone(),
            outcome,
            distance_m: self.state.odometer_m,
            reported_distance_m: self.state.reported_odometer_m,
            iterations: self.iterations,
            llm_calls: self.llm_calls,
            answer: self.answer.clone(),
            failure_modes: self.failure_modes(),
            trace: self.trace.clone(),
        }
    }
}

/// Runs a mission to completion without an operator.
pub fn run_mission(
    spec: &str,
    world: &WorldScenario,
    client: &mut dyn ModelClient,
    cfg: &LoopConfig,
) -> MissionReport {
    let mut session = MissionSession::new(spec, world.clone(), *cfg);
    while session.phase() == &Phase::Planning {
        session.step(client);
    }
    session.abandon();
    session.report()
}

//! Deterministic ground-truth world.
//!
//! A [`WorldScenario`] holds the full map, hidden content included. A
//! [`RobotState`] holds what the robot has discovered. [`execute`] runs one
//! validated action and returns the next state plus a [`StepResult`]
//! describing what was revealed and what happened.

mod comms;
mod exec;
mod scenario;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::geometry::Point;
use crate::graph::{GraphDiff, NodeId, SemanticGraph};
use crate::plan::RobotContext;
use crate::validate::KnownOccupancy;

pub use comms::{in_comms, nearest_comm_point, return_to_comms, CommError};
pub use exec::{execute, ExecError};
pub use scenario::{CommSite, FailureInjectors, ScenarioError, TruthGrid, WorldScenario};

/// Mission success condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalPredicate {
    /// The robot ends up at this node.
    VisitNode(NodeId),
    /// A node of this class is in the robot's map.
    NodeDiscovered(String),
    /// The answer contains this text, case-insensitively.
    AnswerContains(String),
    /// Every component holds.
    All(Vec<GoalPredicate>),
}

impl GoalPredicate {
    pub fn holds(&self, state: &RobotState, answer: Option<&str>) -> bool {
        match self {
            GoalPredicate::VisitNode(id) => &state.at == id,
            GoalPredicate::NodeDiscovered(class) => state.known.nodes().any(|n| &n.class == class),
            GoalPredicate::AnswerContains(needle) => {
                answer.is_some_and(|a| a.to_lowercase().contains(&needle.to_lowercase()))
            }
            GoalPredicate::All(parts) => parts.iter().all(|p| p.holds(state, answer)),
        }
    }
}

/// Evaluates the scenario goal.
pub fn check_goal(world: &WorldScenario, state: &RobotState, answer: Option<&str>) -> bool {
    world.goal.holds(state, answer)
}

/// Everything the robot carries between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub at: NodeId,
    pub pose: Point,
    /// True distance travelled.
    pub odometer_m: f64,
    /// Distance as reported by (possibly drifting) odometry.
    pub reported_odometer_m: f64,
    pub known: SemanticGraph,
    pub known_occ: KnownOccupancy,
    pub step: u64,
    /// Corridors found blocked by ground-truth obstacles, as ordered pairs.
    pub blocked: BTreeSet<(NodeId, NodeId)>,
}

impl RobotState {
    pub fn context(&self) -> RobotContext {
        RobotContext {
            at: self.at.clone(),
            pose: self.pose,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", content = "text", rename_all = "snake_case")]
pub enum SimEvent {
    CommLost,
    CommRestored,
    BlockedByObstacle(String),
    InspectionResult(String),
    MissionAnswered(String),
    ClarificationRequested(String),
}

impl SimEvent {
    /// Text for the planner's history, if the event carries information.
    pub fn observation(&self) -> Option<String> {
        match self {
            SimEvent::CommLost => Some("communication lost".into()),
            SimEvent::CommRestored => Some("communication restored".into()),
            SimEvent::BlockedByObstacle(t) => Some(format!("blocked by obstacle: {t}")),
            SimEvent::InspectionResult(t) => Some(format!("inspection result: {t}")),
            SimEvent::MissionAnswered(_) | SimEvent::ClarificationRequested(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    /// Content revealed by this step.
    pub diff: GraphDiff,
    pub distance_m: f64,
    pub events: Vec<SimEvent>,
    /// Terminal action executed or goal satisfied.
    pub done: bool,
    pub goal_met: bool,
    /// Polyline the robot sensed along (a single point for stationary
    /// sensing). Every revealed node lies within the reveal radius of it.
    pub trajectory: Vec<Point>,
}

impl StepResult {
    pub fn blocked(&self) -> bool {
        self.events
            .iter()
            .any(|e| matches!(e, SimEvent::BlockedByObstacle(_)))
    }
}

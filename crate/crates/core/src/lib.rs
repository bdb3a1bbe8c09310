//! Closed-loop mission planning for robots in partially known environments.
//!
//! A language model proposes plans over a [`graph::SemanticGraph`] using a
//! closed behavior API ([`plan::Action`]). Every plan is grounded by the
//! [`validate`] module before the deterministic world simulator ([`sim`])
//! executes it and reveals new map content, which the [`mission`] loop feeds
//! back into the next prompt. The [`distill`] module turns expert runs into a
//! chat-format finetuning corpus and scores candidate planners.

pub mod distill;
pub mod geometry;
pub mod graph;
pub mod grid;
pub mod mission;
pub mod plan;
pub mod repair;
pub mod sim;
pub mod validate;

pub use graph::{Edge, EdgeKind, GraphDiff, GraphError, Node, NodeId, NodeKind, SemanticGraph};
pub use plan::{Action, Behavior, Plan, PlanError, RobotKind, RobotProfile};
pub use validate::{KnownOccupancy, ValidationReport, Violation, ViolationKind};

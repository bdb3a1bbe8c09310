//! Plan grounding.
//!
//! Every task of a proposed plan is checked, in order, against the robot's
//! known map while simulating where earlier tasks leave the robot:
//!
//! * syntax: behavior available to the profile, node targets exist and have
//!   the right kind;
//! * reachability: goto/inspect/map_region targets are reachable over
//!   traversability edges from the simulated current node;
//! * explorable: explore_region/extend_map targets admit an obstacle-free
//!   grid path, unknown cells counting as free;
//! * geofence (aerial robots): every target lies inside the fence.
//!
//! All violations are collected; nothing short-circuits.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::Point;
use crate::graph::{reachable, NodeId, NodeKind, SemanticGraph};
use crate::grid::{bfs_path, Cell, CellState, Connectivity, GridGeometry};
use crate::plan::{Action, Behavior, Plan, PlanError, RobotContext, RobotKind, RobotProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Syntax,
    Reachability,
    Explorable,
    Geofence,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationKind::Syntax => "syntax",
            ViolationKind::Reachability => "reachability",
            ViolationKind::Explorable => "explorable",
            ViolationKind::Geofence => "geofence",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub task_index: usize,
    pub behavior: String,
    pub kind: ViolationKind,
    pub subject: String,
    pub message: String,
}

impl Violation {
    /// `Task <i> (<behavior>): <kind> violation — <message>`
    pub fn feedback_line(&self) -> String {
        format!(
            "Task {} ({}): {} violation \u{2014} {}",
            self.task_index, self.behavior, self.kind, self.message
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
    pub feedback_text: String,
}

impl ValidationReport {
    pub fn from_violations(mut violations: Vec<Violation>) -> Self {
        violations.sort_by_key(|v| v.task_index);
        let feedback_text = violations
            .iter()
            .map(Violation::feedback_line)
            .collect::<Vec<_>>()
            .join("\n");
        Self {
            ok: violations.is_empty(),
            violations,
            feedback_text,
        }
    }

    /// A parser rejection expressed as a single syntax violation, so that
    /// parse failures travel through the same feedback channel.
    pub fn from_parse_error(err: &PlanError) -> Self {
        let behavior = match err {
            PlanError::UnknownBehavior { name, .. } => name.clone(),
            PlanError::TerminalNotLast { behavior, .. } => behavior.name().to_string(),
            _ => "plan".to_string(),
        };
        Self::from_violations(vec![Violation {
            task_index: err.task_index(),
            behavior,
            kind: ViolationKind::Syntax,
            subject: err.subject(),
            message: err.to_string(),
        }])
    }

    pub fn has_kind(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }
}

/// One line per violation in task order; empty iff the report is ok.
pub fn render_feedback(report: &ValidationReport) -> String {
    report
        .violations
        .iter()
        .map(Violation::feedback_line)
        .collect::<Vec<_>>()
        .join("\n")
}

/// What the robot knows about free space.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownOccupancy {
    geometry: GridGeometry,
    cells: Vec<CellState>,
}

impl KnownOccupancy {
    /// Everything unknown.
    pub fn unknown(geometry: GridGeometry) -> Self {
        Self {
            cells: vec![CellState::Unknown; geometry.cell_count()],
            geometry,
        }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn get(&self, cell: Cell) -> CellState {
        self.cells[self.geometry.index(cell)]
    }

    pub fn set(&mut self, cell: Cell, state: CellState) {
        let idx = self.geometry.index(cell);
        self.cells[idx] = state;
    }

    pub fn state_at(&self, p: Point) -> Option<CellState> {
        self.geometry.cell_of(p).map(|c| self.get(c))
    }

    /// Optimistic passability: anything not known to be an obstacle.
    pub fn passable(&self, cell: Cell) -> bool {
        self.get(cell) != CellState::Obstacle
    }

    pub fn count(&self, state: CellState) -> usize {
        self.cells.iter().filter(|c| **c == state).count()
    }

    /// Optimistic grid path between two world points.
    pub fn path(&self, from: Point, to: Point, conn: Connectivity) -> Option<Vec<Cell>> {
        let start = self.geometry.cell_of(from)?;
        let goal = self.geometry.cell_of(to)?;
        bfs_path(&self.geometry, start, goal, conn, |c| self.passable(c))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Validator {
    pub connectivity: Connectivity,
    /// Skip the grid check, for callers that have no occupancy knowledge.
    pub skip_explorable: bool,
}

/// Validates with 4-connected grid paths.
pub fn validate(
    plan: &Plan,
    graph: &SemanticGraph,
    robot: &RobotContext,
    occ: &KnownOccupancy,
    profile: &RobotProfile,
) -> ValidationReport {
    Validator::default().validate(plan, graph, robot, occ, profile)
}

fn fmt_xy(x: f64, y: f64) -> String {
    format!("({x}, {y})")
}

impl Validator {
    pub fn validate(
        &self,
        plan: &Plan,
        graph: &SemanticGraph,
        robot: &RobotContext,
        occ: &KnownOccupancy,
        profile: &RobotProfile,
    ) -> ValidationReport {
        let mut out = Vec::new();
        let mut current: Option<NodeId> = graph.contains(&robot.at).then(|| robot.at.clone());
        let mut pose = robot.pose;
        if current.is_none() {
            out.push(Violation {
                task_index: 0,
                behavior: plan
                    .tasks
                    .first()
                    .map_or("plan", |t| t.behavior().name())
                    .to_string(),
                kind: ViolationKind::Syntax,
                subject: robot.at.to_string(),
                message: format!(
                    "task 0: robot location '{}' does not exist in the semantic graph",
                    robot.at
                ),
            });
        }

        for (i, task) in plan.tasks.iter().enumerate() {
            let behavior = task.behavior();
            let mut violate = |kind, subject: String, message: String| {
                out.push(Violation {
                    task_index: i,
                    behavior: behavior.name().to_string(),
                    kind,
                    subject,
                    message: format!("task {i}: {message}"),
                });
            };

            if !profile.allows(behavior) {
                violate(
                    ViolationKind::Syntax,
                    behavior.name().to_string(),
                    format!("behavior '{behavior}' is not available to this robot"),
                );
                continue;
            }

            // Syntax: targets exist and have the right kind.
            let target = match task.target_node() {
                Some(id) => match graph.node(id) {
                    None => {
                        violate(
                            ViolationKind::Syntax,
                            id.to_string(),
                            format!("node '{id}' does not exist in the semantic graph"),
                        );
                        continue;
                    }
                    Some(n) => {
                        let needs_region =
                            matches!(behavior, Behavior::MapRegion | Behavior::ExploreRegion);
                        if needs_region && n.kind != NodeKind::Region {
                            violate(
                                ViolationKind::Syntax,
                                id.to_string(),
                                format!("'{id}' is an object but {behavior} needs a region"),
                            );
                            continue;
                        }
                        Some(n)
                    }
                },
                None => None,
            };

            // Reachability.
            if matches!(
                behavior,
                Behavior::Goto | Behavior::Inspect | Behavior::MapRegion
            ) {
                let target = target.expect("node-targeted behavior");
                if let Some(cur) = &current {
                    if !reachable(graph, cur, &target.id).unwrap_or(false) {
                        violate(
                            ViolationKind::Reachability,
                            target.id.to_string(),
                            format!(
                                "'{}' is not reachable from '{cur}' over traversability edges",
                                target.id
                            ),
                        );
                    }
                }
            }

            // Explorable.
            let goal_point = match task {
                Action::ExtendMap { x, y } => Some((Point::new(*x, *y), fmt_xy(*x, *y))),
                Action::ExploreRegion { .. } => target.map(|n| (n.position, n.id.to_string())),
                _ => None,
            };
            if let Some((goal, subject)) = &goal_point {
                if profile.kind == RobotKind::Ugv && !self.skip_explorable {
                    let geom = occ.geometry();
                    if geom.cell_of(*goal).is_none() {
                        violate(
                            ViolationKind::Explorable,
                            subject.clone(),
                            format!("'{subject}' lies outside the known map"),
                        );
                    } else if geom.cell_of(pose).is_none() {
                        violate(
                            ViolationKind::Explorable,
                            subject.clone(),
                            format!(
                                "robot position {} is outside the known map, no path to '{subject}'",
                                fmt_xy(pose.x, pose.y)
                            ),
                        );
                    } else if occ.path(pose, *goal, self.connectivity).is_none() {
                        violate(
                            ViolationKind::Explorable,
                            subject.clone(),
                            format!(
                                "no obstacle-free path from {} to '{subject}'",
                                fmt_xy(pose.x, pose.y)
                            ),
                        );
                    }
                }
            }

            // Geofence.
            if profile.kind == RobotKind::Uav {
                let fence_target =
                    goal_point.or_else(|| target.map(|n| (n.position, n.id.to_string())));
                if let Some((p, subject)) = fence_target {
                    if !profile.inside_geofence(p) {
                        violate(
                            ViolationKind::Geofence,
                            subject.clone(),
                            format!("'{subject}' lies outside the geofence"),
                        );
                    }
                }
            }

            // Advance the simulated robot.
            match task {
                Action::Goto { .. } => {
                    let t = target.expect("goto has a target");
                    current = Some(t.id.clone());
                    pose = match profile.kind {
                        RobotKind::Uav => {
                            profile.nearest_waypoint(t.position).unwrap_or(t.position)
                        }
                        RobotKind::Ugv => t.position,
                    };
                }
                Action::ExploreRegion { .. } => {
                    let t = target.expect("explore has a target");
                    current = Some(t.id.clone());
                    pose = t.position;
                }
                Action::ExtendMap { x, y } => {
                    pose = Point::new(*x, *y);
                    current = resting_node(graph, pose).or(current);
                }
                _ => {}
            }
        }
        ValidationReport::from_violations(out)
    }
}

/// The node a robot is considered to be at after stopping at `pose` away
/// from any node: the nearest region of the graph it planned against.
pub fn resting_node(graph: &SemanticGraph, pose: Point) -> Option<NodeId> {
    graph.nearest_region(pose).map(|n| n.id.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, Node};

    fn id(s: &str) -> NodeId {
        NodeId::new(s).unwrap()
    }

    fn graph() -> SemanticGraph {
        SemanticGraph::new(
            [
                Node::region("home", "base", 5.0, 5.0).unwrap(),
                Node::region("lot", "parking_lot", 25.0, 5.0).unwrap(),
                Node::object("car", "car", 26.0, 6.0).unwrap(),
                Node::region("island", "field", 50.0, 50.0).unwrap(),
                Node::region("shed_3", "shed", 55.0, 55.0).unwrap(),
            ],
            [
                Edge::traversability("home", "lot").unwrap(),
                Edge::containment("lot", "car").unwrap(),
                Edge::traversability("island", "shed_3").unwrap(),
            ],
        )
        .unwrap()
    }

    fn occ() -> KnownOccupancy {
        KnownOccupancy::unknown(GridGeometry::new(64, 64, 1.0, Point::new(0.0, 0.0)).unwrap())
    }

    fn at_home() -> RobotContext {
        RobotContext {
            at: id("home"),
            pose: Point::new(5.0, 5.0),
        }
    }

    fn plan(tasks: Vec<Action>) -> Plan {
        Plan::new("", tasks).unwrap()
    }

    fn check(tasks: Vec<Action>) -> ValidationReport {
        validate(
            &plan(tasks),
            &graph(),
            &at_home(),
            &occ(),
            &RobotProfile::ugv(),
        )
    }

    #[test]
    fn unknown_target_is_syntax() {
        let r = check(vec![Action::goto("warehouse_9")]);
        assert!(!r.ok);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].kind, ViolationKind::Syntax);
        assert!(r.violations[0].message.contains("warehouse_9"));
    }

    #[test]
    fn disconnected_target_is_reachability() {
        let r = check(vec![Action::goto("shed_3")]);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].kind, ViolationKind::Reachability);
        assert_eq!(r.violations[0].subject, "shed_3");
    }

    #[test]
    fn valid_goto_then_map() {
        let r = check(vec![
            Action::goto("lot"),
            Action::MapRegion {
                region: id("lot"),
                classes: None,
            },
            Action::Inspect {
                node: id("car"),
                query: "anyone inside?".into(),
            },
        ]);
        assert!(r.ok, "{}", r.feedback_text);
        assert!(r.violations.is_empty());
        assert_eq!(render_feedback(&r), "");
    }

    #[test]
    fn walled_corridor_is_not_explorable() {
        let mut o = occ();
        for row in 0..64 {
            o.set(Cell::new(15, row), CellState::Obstacle);
        }
        let r = validate(
            &plan(vec![Action::ExploreRegion {
                region: id("lot"),
                radius_m: 5.0,
            }]),
            &graph(),
            &at_home(),
            &o,
            &RobotProfile::ugv(),
        );
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].kind, ViolationKind::Explorable);
        // unknown cells are optimistic
        let r = check(vec![Action::ExtendMap { x: 60.0, y: 60.0 }]);
        assert!(r.ok);
        let r = check(vec![Action::ExtendMap { x: 80.0, y: 1.0 }]);
        assert!(r.has_kind(ViolationKind::Explorable));
        assert_eq!(r.violations[0].subject, "(80, 1)");
    }

    #[test]
    fn positions_follow_earlier_tasks() {
        // After going to the island, shed_3 is reachable but lot is not.
        let g = graph();
        let robot = RobotContext {
            at: id("island"),
            pose: Point::new(50.0, 50.0),
        };
        let p = plan(vec![Action::goto("shed_3"), Action::goto("lot")]);
        let r = validate(&p, &g, &robot, &occ(), &RobotProfile::ugv());
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].task_index, 1);
    }

    #[test]
    fn collects_everything_in_task_order() {
        let r = check(vec![
            Action::goto("nowhere"),
            Action::goto("shed_3"),
            Action::MapRegion {
                region: id("car"),
                classes: None,
            },
        ]);
        assert_eq!(r.violations.len(), 3);
        let lines: Vec<&str> = r.feedback_text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("Task 0 (goto): syntax violation \u{2014} "));
        assert!(lines[1].starts_with("Task 1 (goto): reachability violation"));
        assert!(lines[1].contains("shed_3"));
        assert!(lines[2].starts_with("Task 2 (map_region): syntax violation"));
        for v in &r.violations {
            assert!(v.message.contains(&v.subject));
            assert!(v.message.contains(&format!("task {}", v.task_index)));
        }
    }

    #[test]
    fn unknown_robot_location_is_reported() {
        let robot = RobotContext {
            at: id("ghost"),
            pose: Point::new(1.0, 1.0),
        };
        let r = validate(
            &plan(vec![Action::goto("lot")]),
            &graph(),
            &robot,
            &occ(),
            &RobotProfile::ugv(),
        );
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].subject, "ghost");
    }

    #[test]
    fn uav_profile_checks_behaviors_and_fence() {
        let fence = vec![
            Point::new(0.0, 0.0),
            Point::new(40.0, 0.0),
            Point::new(40.0, 40.0),
            Point::new(0.0, 40.0),
        ];
        let uav =
            RobotProfile::uav(vec![Point::new(5.0, 5.0), Point::new(25.0, 5.0)], fence).unwrap();
        let mut g = graph();
        g.insert_edge(Edge::traversability("lot", "island").unwrap())
            .unwrap();
        let p = plan(vec![
            Action::goto("lot"),
            Action::ExtendMap { x: 1.0, y: 1.0 },
            Action::goto("island"),
        ]);
        let r = validate(&p, &g, &at_home(), &occ(), &uav);
        let kinds: Vec<_> = r
            .violations
            .iter()
            .map(|v| (v.task_index, v.kind))
            .collect();
        assert_eq!(
            kinds,
            vec![(1, ViolationKind::Syntax), (2, ViolationKind::Geofence)]
        );
    }

    #[test]
    fn parse_errors_become_syntax_feedback() {
        let err =
            crate::plan::parse_plan(r#"{"tasks":[{"behavior":"fly","args":{}}]}"#).unwrap_err();
        let r = ValidationReport::from_parse_error(&err);
        assert_eq!(
            r.feedback_text,
            "Task 0 (fly): syntax violation \u{2014} unknown behavior 'fly' at task 0"
        );
    }
}

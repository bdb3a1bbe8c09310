use std::collections::BTreeSet;

use thiserror::Error;

use super::comms::in_comms;
use super::{RobotState, SimEvent, StepResult, WorldScenario};
use crate::geometry::{sample_segment, Point};
use crate::graph::{diff, shortest_path_avoiding, EdgeKind, NodeId, NodeKind, SemanticGraph};
use crate::grid::{bfs_path, Cell, CellState, Connectivity};
use crate::plan::{Action, Plan, RobotKind};
use crate::validate::{resting_node, Validator, ViolationKind};

/// The executor refused an action that would not pass validation against
/// the robot's current knowledge.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("executor refused {behavior}: {message}")]
pub struct ExecError {
    pub kind: ViolationKind,
    pub behavior: String,
    pub message: String,
}

/// Which hidden content a step can reveal.
enum Sense {
    /// Every node near the trajectory.
    Along,
    /// Only these nodes.
    Only(BTreeSet<NodeId>),
}

pub(super) struct Step<'a> {
    trajectory: Vec<Point>,
    distance_m: f64,
    events: Vec<SimEvent>,
    answer: Option<&'a str>,
    terminal: bool,
    sense: Sense,
}

impl<'a> Step<'a> {
    pub(super) fn moving(trajectory: Vec<Point>, distance_m: f64, events: Vec<SimEvent>) -> Self {
        Self {
            trajectory,
            distance_m,
            events,
            answer: None,
            terminal: false,
            sense: Sense::Along,
        }
    }
}

/// Truth-grid BFS between two points.
pub(super) fn truth_path(world: &WorldScenario, from: Point, to: Point) -> Option<Vec<Cell>> {
    let g = &world.grid.geometry;
    let start = g.cell_of(from)?;
    let goal = g.cell_of(to)?;
    bfs_path(g, start, goal, Connectivity::Four, |c| {
        !world.grid.is_obstacle(c)
    })
}

/// Records what the robot perceives while driving over `cells`: the cells
/// themselves are free and adjacent ground-truth obstacles become known.
pub(super) fn learn_cells(world: &WorldScenario, state: &mut RobotState, cells: &[Cell]) {
    let g = world.grid.geometry;
    for &c in cells {
        state.known_occ.set(c, CellState::Free);
        for n in g.neighbors(c, Connectivity::Four) {
            if world.grid.is_obstacle(n) {
                state.known_occ.set(n, CellState::Obstacle);
            }
        }
    }
}

/// Marks the ground-truth obstacles on the straight line `a`-`b` as known.
fn learn_blockage(world: &WorldScenario, state: &mut RobotState, a: Point, b: Point) {
    let g = world.grid.geometry;
    for p in sample_segment(a, b, g.resolution / 2.0) {
        if let Some(c) = g.cell_of(p) {
            if world.grid.is_obstacle(c) {
                state.known_occ.set(c, CellState::Obstacle);
            }
        }
    }
}

fn cell_length(world: &WorldScenario, cells: &[Cell]) -> f64 {
    world.grid.geometry.resolution * cells.len().saturating_sub(1) as f64
}

/// Reveals hidden content, accrues odometry, advances the step counter and
/// reports communication changes and goal status.
pub(super) fn finish_step(
    world: &WorldScenario,
    before: &RobotState,
    mut next: RobotState,
    step: Step<'_>,
) -> (RobotState, StepResult) {
    let revealed: BTreeSet<NodeId> = match step.sense {
        Sense::Along => {
            let samples = polyline_samples(&step.trajectory, world.grid.geometry.resolution);
            world
                .truth
                .nodes()
                .filter(|n| !next.known.contains(&n.id))
                .filter(|n| {
                    samples
                        .iter()
                        .any(|p| p.distance(n.position) <= world.reveal_radius_m)
                })
                .map(|n| n.id.clone())
                .collect()
        }
        Sense::Only(ids) => ids
            .into_iter()
            .filter(|id| !next.known.contains(id))
            .collect(),
    };
    if !revealed.is_empty() {
        next.known = reveal(&world.truth, &next.known, &revealed);
    }
    let graph_diff = diff(&before.known, &next.known);

    next.odometer_m += step.distance_m;
    next.reported_odometer_m += step.distance_m * (1.0 + world.failures.odometry_drift_rate);
    next.step = before.step + 1;

    let mut events = step.events;
    let was = in_comms(world, before.pose, before.step);
    let now = in_comms(world, next.pose, next.step);
    if was && !now {
        events.push(SimEvent::CommLost);
    } else if !was && now {
        events.push(SimEvent::CommRestored);
    }

    let goal_met = world.goal.holds(&next, step.answer);
    let result = StepResult {
        diff: graph_diff,
        distance_m: step.distance_m,
        events,
        done: step.terminal || goal_met,
        goal_met,
        trajectory: step.trajectory,
    };
    (next, result)
}

fn polyline_samples(points: &[Point], step: f64) -> Vec<Point> {
    match points {
        [] => Vec::new(),
        [p] => vec![*p],
        _ => points
            .windows(2)
            .flat_map(|w| sample_segment(w[0], w[1], step))
            .collect(),
    }
}

/// `known` extended by `ids`, every node marked visible, edges induced from
/// the truth graph.
fn reveal(truth: &SemanticGraph, known: &SemanticGraph, ids: &BTreeSet<NodeId>) -> SemanticGraph {
    let mut g = truth.induced(|n| known.contains(&n.id) || ids.contains(&n.id));
    let hidden: Vec<_> = g.nodes().filter(|n| !n.visible).cloned().collect();
    for n in hidden {
        g.replace_node(n.with_visible(true))
            .expect("same node kind");
    }
    g
}

fn ordered(a: &NodeId, b: &NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

/// Executes one action. The action must pass validation against
/// `state.known`; otherwise the executor refuses.
pub fn execute(
    action: &Action,
    world: &WorldScenario,
    state: &RobotState,
) -> Result<(RobotState, StepResult), ExecError> {
    precondition(action, world, state)?;
    let mut next = state.clone();
    let step = match action {
        Action::Goto { node } => match world.profile.kind {
            RobotKind::Ugv => goto_ground(world, state, &mut next, node),
            RobotKind::Uav => {
                let target = state.known.node(node).expect("validated target");
                let to = world
                    .profile
                    .nearest_waypoint(target.position)
                    .unwrap_or(target.position);
                next.at = node.clone();
                next.pose = to;
                Step::moving(vec![state.pose, to], state.pose.distance(to), Vec::new())
            }
        },
        Action::MapRegion { region, classes } => {
            let center = state.known.node(region).expect("validated target").position;
            let ids = world
                .truth
                .neighbors(region)
                .filter(|(_, k)| *k == EdgeKind::Containment)
                .filter_map(|(id, _)| world.truth.node(id))
                .filter(|n| n.kind == NodeKind::Object)
                .filter(|n| {
                    classes
                        .as_ref()
                        .is_none_or(|cs| cs.iter().any(|c| c == &n.class))
                })
                .filter(|n| n.position.distance(center) <= world.reveal_radius_m)
                .map(|n| n.id.clone())
                .collect();
            Step {
                sense: Sense::Only(ids),
                ..Step::moving(vec![center], 0.0, Vec::new())
            }
        }
        Action::ExploreRegion { region, radius_m } => {
            let center = state.known.node(region).expect("validated target").position;
            match world.profile.kind {
                RobotKind::Ugv => {
                    explore_ground(world, state, &mut next, region, center, *radius_m)
                }
                RobotKind::Uav => explore_air(world, state, &mut next, region, center, *radius_m),
            }
        }
        Action::ExtendMap { x, y } => {
            let to = Point::new(*x, *y);
            match truth_path(world, state.pose, to) {
                Some(cells) => {
                    learn_cells(world, &mut next, &cells);
                    let mut traj = vec![state.pose];
                    traj.extend(cells.iter().skip(1).map(|c| world.grid.geometry.center(*c)));
                    traj.push(to);
                    next.pose = to;
                    if let Some(rest) = resting_node(&state.known, to) {
                        next.at = rest;
                    }
                    Step::moving(traj, cell_length(world, &cells), Vec::new())
                }
                None => {
                    learn_blockage(world, &mut next, state.pose, to);
                    let ev = SimEvent::BlockedByObstacle(format!("no free path to ({x}, {y})"));
                    Step::moving(vec![state.pose], 0.0, vec![ev])
                }
            }
        }
        Action::Inspect { node, .. } => {
            let n = world.truth.node(node).expect("validated target");
            let text = if n.description.is_empty() {
                format!("{node}: nothing notable")
            } else {
                format!("{node}: {}", n.description)
            };
            Step::moving(
                vec![state.pose],
                0.0,
                vec![SimEvent::InspectionResult(text)],
            )
        }
        Action::Answer { text } => Step {
            answer: Some(text),
            terminal: true,
            ..Step::moving(
                vec![state.pose],
                0.0,
                vec![SimEvent::MissionAnswered(text.clone())],
            )
        },
        Action::Clarify { question } => Step {
            terminal: true,
            ..Step::moving(
                vec![state.pose],
                0.0,
                vec![SimEvent::ClarificationRequested(question.clone())],
            )
        },
    };
    Ok(finish_step(world, state, next, step))
}

fn precondition(
    action: &Action,
    world: &WorldScenario,
    state: &RobotState,
) -> Result<(), ExecError> {
    let refuse = |kind, message: String| ExecError {
        kind,
        behavior: action.behavior().name().to_string(),
        message,
    };
    let plan = Plan::new("", vec![action.clone()])
        .map_err(|e| refuse(ViolationKind::Syntax, e.to_string()))?;
    let report = Validator::default().validate(
        &plan,
        &state.known,
        &state.context(),
        &state.known_occ,
        &world.profile,
    );
    match report.violations.into_iter().next() {
        Some(v) => Err(refuse(v.kind, v.message)),
        None => Ok(()),
    }
}

fn goto_ground<'a>(
    world: &WorldScenario,
    state: &RobotState,
    next: &mut RobotState,
    target: &NodeId,
) -> Step<'a> {
    let known = &state.known;
    let mut traj = vec![state.pose];
    let mut distance = 0.0;
    let at_pos = known.node(&state.at).expect("validated location").position;

    // Rejoin the graph after stopping away from a node.
    if state.pose != at_pos {
        if truth_path(world, state.pose, at_pos).is_none()
            && world.grid.geometry.cell_of(state.pose).is_some()
        {
            learn_blockage(world, next, state.pose, at_pos);
            let ev = SimEvent::BlockedByObstacle(format!("no free path back to '{}'", state.at));
            return Step::moving(traj, 0.0, vec![ev]);
        }
        distance += state.pose.distance(at_pos);
        traj.push(at_pos);
        next.pose = at_pos;
    }

    let blocked = &state.blocked;
    let route = match shortest_path_avoiding(known, &state.at, target, |u, v| {
        !blocked.contains(&ordered(u, v))
    }) {
        Ok(r) => r,
        Err(_) => {
            let ev = SimEvent::BlockedByObstacle(format!(
                "every known route from '{}' to '{target}' is blocked",
                state.at
            ));
            return Step::moving(traj, distance, vec![ev]);
        }
    };

    for hop in route.path.windows(2) {
        let (u, v) = (&hop[0], &hop[1]);
        let pu = known.node(u).expect("path node").position;
        let pv = known.node(v).expect("path node").position;
        let corridor = known.edge_kind(u, v) == Some(EdgeKind::Traversability);
        let g = &world.grid.geometry;
        let checkable = g.cell_of(pu).is_some() && g.cell_of(pv).is_some();
        if corridor && checkable && truth_path(world, pu, pv).is_none() {
            next.blocked.insert(ordered(u, v));
            learn_blockage(world, next, pu, pv);
            next.at = u.clone();
            next.pose = pu;
            let ev =
                SimEvent::BlockedByObstacle(format!("corridor from '{u}' to '{v}' is blocked"));
            return Step::moving(traj, distance, vec![ev]);
        }
        distance += pu.distance(pv);
        traj.push(pv);
    }
    next.at = target.clone();
    next.pose = known.node(target).expect("validated target").position;
    Step::moving(traj, distance, Vec::new())
}

const SPOKES: [(i64, i64); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

fn explore_ground<'a>(
    world: &WorldScenario,
    state: &RobotState,
    next: &mut RobotState,
    region: &NodeId,
    center: Point,
    radius_m: f64,
) -> Step<'a> {
    let g = world.grid.geometry;
    let Some(approach) = truth_path(world, state.pose, center) else {
        learn_blockage(world, next, state.pose, center);
        let ev = SimEvent::BlockedByObstacle(format!("no free path to region '{region}'"));
        return Step::moving(vec![state.pose], 0.0, vec![ev]);
    };
    let mut cells = approach.clone();
    let hub = *approach.last().expect("non-empty path");
    let reach = (radius_m / g.resolution).floor() as i64;
    for (dx, dy) in SPOKES {
        let mut out = Vec::new();
        for k in 1..=reach {
            let c = hub.col as i64 + dx * k;
            let r = hub.row as i64 + dy * k;
            if c < 0 || r < 0 || c as usize >= g.width || r as usize >= g.height {
                break;
            }
            let cell = Cell::new(c as usize, r as usize);
            if world.grid.is_obstacle(cell) {
                break;
            }
            out.push(cell);
        }
        let back: Vec<Cell> = out.iter().rev().skip(1).copied().chain([hub]).collect();
        if !out.is_empty() {
            cells.extend(out);
            cells.extend(back);
        }
    }
    let mut traj = vec![state.pose];
    traj.extend(cells.iter().map(|c| g.center(*c)));
    traj.push(center);
    next.at = region.clone();
    next.pose = center;
    Step::moving(traj, cell_length(world, &cells), Vec::new())
}

fn explore_air<'a>(
    world: &WorldScenario,
    state: &RobotState,
    next: &mut RobotState,
    region: &NodeId,
    center: Point,
    radius_m: f64,
) -> Step<'a> {
    let step = world.grid.geometry.resolution;
    let mut traj = vec![state.pose, center];
    let mut distance = state.pose.distance(center);
    for (dx, dy) in SPOKES {
        let tip = Point::new(
            center.x + dx as f64 * radius_m,
            center.y + dy as f64 * radius_m,
        );
        let reach = sample_segment(center, tip, step)
            .into_iter()
            .take_while(|p| world.profile.inside_geofence(*p))
            .last()
            .unwrap_or(center);
        if reach != center {
            distance += 2.0 * center.distance(reach);
            traj.push(reach);
            traj.push(center);
        }
    }
    next.at = region.clone();
    next.pose = center;
    Step::moving(traj, distance, Vec::new())
}

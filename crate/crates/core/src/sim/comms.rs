use thiserror::Error;

use super::exec::{finish_step, learn_cells, truth_path, Step};
use super::{RobotState, StepResult, WorldScenario};
use crate::geometry::Point;
use crate::grid::{bfs_distances, Cell, Connectivity};
use crate::plan::RobotKind;
use crate::validate::resting_node;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CommError {
    #[error("robot position ({0}, {1}) lies outside the grid")]
    OutsideGrid(f64, f64),
    #[error("no communication coverage reachable from ({0}, {1})")]
    NoCoverage(f64, f64),
    #[error("covered point ({0}, {1}) cannot be reached over free ground")]
    Unreachable(f64, f64),
}

fn covered(world: &WorldScenario, p: Point) -> bool {
    world.comm_sites.iter().any(|s| s.covers(p))
}

/// True when `pose` is inside a comm disk and `step` lies outside every
/// dropout window. A scenario without comm sites has unlimited coverage.
pub fn in_comms(world: &WorldScenario, pose: Point, step: u64) -> bool {
    if world.failures.in_dropout(step) {
        return false;
    }
    world.comm_sites.is_empty() || covered(world, pose)
}

/// Center of the closest covered cell. Ground robots measure closeness in
/// grid steps over cells not known to be obstacles; aerial robots in
/// straight-line distance. Ties go to the first cell in row-major order.
pub fn nearest_comm_point(world: &WorldScenario, state: &RobotState) -> Result<Point, CommError> {
    let geom = state.known_occ.geometry();
    let pose = state.pose;
    let no_coverage = || CommError::NoCoverage(pose.x, pose.y);
    if world.comm_sites.is_empty() {
        return Ok(pose);
    }
    let candidates = (0..geom.cell_count())
        .map(|i| geom.cell_at(i))
        .filter(|c| covered(world, geom.center(*c)));
    match world.profile.kind {
        RobotKind::Uav => candidates
            .filter(|c| world.profile.inside_geofence(geom.center(*c)))
            .map(|c| (pose.distance(geom.center(c)), c))
            .fold(None, |best: Option<(f64, Cell)>, cur| match best {
                Some(b) if b.0 <= cur.0 => Some(b),
                _ => Some(cur),
            })
            .map(|(_, c)| geom.center(c))
            .ok_or_else(no_coverage),
        RobotKind::Ugv => {
            let start = geom
                .cell_of(pose)
                .ok_or(CommError::OutsideGrid(pose.x, pose.y))?;
            let dist = bfs_distances(geom, start, Connectivity::Four, |c| {
                state.known_occ.passable(c)
            });
            candidates
                .filter_map(|c| dist[geom.index(c)].map(|d| (d, c)))
                .fold(None, |best: Option<(usize, Cell)>, cur| match best {
                    Some(b) if b.0 <= cur.0 => Some(b),
                    _ => Some(cur),
                })
                .map(|(_, c)| geom.center(c))
                .ok_or_else(no_coverage)
        }
    }
}

/// Moves the robot back into coverage. When the pose is already covered and
/// only a dropout window blocks communication, the robot waits one step.
pub fn return_to_comms(
    world: &WorldScenario,
    state: &RobotState,
) -> Result<(RobotState, StepResult), CommError> {
    let mut next = state.clone();
    if world.comm_sites.is_empty() || covered(world, state.pose) {
        return Ok(finish_step(
            world,
            state,
            next,
            Step::moving(vec![state.pose], 0.0, Vec::new()),
        ));
    }
    let target = nearest_comm_point(world, state)?;
    let step = match world.profile.kind {
        RobotKind::Uav => Step::moving(
            vec![state.pose, target],
            state.pose.distance(target),
            Vec::new(),
        ),
        RobotKind::Ugv => {
            let cells = truth_path(world, state.pose, target)
                .ok_or(CommError::Unreachable(target.x, target.y))?;
            learn_cells(world, &mut next, &cells);
            let g = world.grid.geometry;
            let mut traj = vec![state.pose];
            traj.extend(cells.iter().skip(1).map(|c| g.center(*c)));
            let distance = g.resolution * (cells.len() - 1) as f64;
            Step::moving(traj, distance, Vec::new())
        }
    };
    next.pose = target;
    if let Some(rest) = resting_node(&state.known, target) {
        next.at = rest;
    }
    Ok(finish_step(world, state, next, step))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{CommSite, SimEvent};

    fn world(sites: Vec<CommSite>) -> WorldScenario {
        let text = r#"{
          "id": "c",
          "graph": {"nodes": [
              {"id":"home","kind":"region","class":"base","x":50,"y":5},
              {"id":"far","kind":"region","class":"field","x":5,"y":5}
            ], "edges": [{"a":"far","b":"home","kind":"traversability"}]},
          "grid": {"width": 60, "height": 20, "resolution": 1.0, "origin": [0, 0],
                   "obstacles": [{"x0": 20, "y0": 0, "x1": 21, "y1": 15}]},
          "start_node": "home",
          "goal": {"visit_node": "home"}
        }"#;
        let mut w = WorldScenario::from_json(text).unwrap();
        w.comm_sites = sites;
        w
    }

    #[test]
    fn coverage_disks_and_dropout() {
        let site = CommSite {
            x: 0.0,
            y: 0.0,
            range_m: 50.0,
        };
        let mut w = world(vec![site]);
        assert!(in_comms(&w, Point::new(0.0, 0.0), 0));
        assert!(!in_comms(&w, Point::new(100.0, 0.0), 0));
        w.failures.comm_dropout = vec![[3, 5]];
        assert!(!in_comms(&w, Point::new(0.0, 0.0), 4));
        assert!(in_comms(&w, Point::new(0.0, 0.0), 6));
        assert!(in_comms(&world(vec![]), Point::new(1e6, 0.0), 0));
    }

    #[test]
    fn nearest_point_matches_exhaustive_scan() {
        let w = world(vec![CommSite {
            x: 0.0,
            y: 10.0,
            range_m: 6.0,
        }]);
        let st = w.initial_state();
        let got = nearest_comm_point(&w, &st).unwrap();
        // Exhaustive oracle: step distance over an all-unknown grid is the
        // Manhattan distance between cells.
        let g = st.known_occ.geometry();
        let start = g.cell_of(st.pose).unwrap();
        let mut best: Option<(usize, Point)> = None;
        for row in 0..g.height {
            for col in 0..g.width {
                let c = Cell::new(col, row);
                let p = g.center(c);
                if !covered(&w, p) {
                    continue;
                }
                let d = start.col.abs_diff(col) + start.row.abs_diff(row);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, p));
                }
            }
        }
        assert_eq!(got, best.unwrap().1);
    }

    #[test]
    fn return_walks_around_unknown_wall() {
        let w = world(vec![CommSite {
            x: 5.0,
            y: 5.0,
            range_m: 4.0,
        }]);
        let st = w.initial_state();
        assert!(!in_comms(&w, st.pose, 0));
        let (next, res) = return_to_comms(&w, &st).unwrap();
        assert!(in_comms(&w, next.pose, next.step));
        assert!(!res.blocked());
        // the wall at x 20..21 is seen while driving around it
        assert!(next.known_occ.count(crate::grid::CellState::Obstacle) > 0);
        assert!(res.distance_m > 45.0 - 9.0);
        assert_eq!(next.at.as_str(), "far");
        assert!(res.events.contains(&SimEvent::CommRestored));
    }

    #[test]
    fn unreachable_coverage_is_an_error() {
        let w = world(vec![CommSite {
            x: 10.0,
            y: 100.0,
            range_m: 5.0,
        }]);
        let st = w.initial_state();
        assert!(matches!(
            nearest_comm_point(&w, &st),
            Err(CommError::NoCoverage(..))
        ));
    }
}

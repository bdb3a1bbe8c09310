use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{GoalPredicate, RobotState};
use crate::geometry::Point;
use crate::graph::{NodeId, SemanticGraph};
use crate::grid::{Cell, CellState, GridGeometry, Rect};
use crate::plan::{RobotKind, RobotProfile};
use crate::validate::KnownOccupancy;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid scenario format: {0}")]
    Format(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// Ground-truth occupancy, authored as obstacle rectangles.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthGrid {
    pub geometry: GridGeometry,
    pub rects: Vec<Rect>,
    obstacle: Vec<bool>,
}

impl TruthGrid {
    pub fn new(geometry: GridGeometry, rects: Vec<Rect>) -> Self {
        let mut obstacle = vec![false; geometry.cell_count()];
        for r in &rects {
            for c in geometry.cells_in_rect(r) {
                obstacle[geometry.index(c)] = true;
            }
        }
        Self {
            geometry,
            rects,
            obstacle,
        }
    }

    /// Grid from an explicit per-cell obstacle mask (row-major).
    pub fn from_mask(geometry: GridGeometry, obstacle: Vec<bool>) -> Self {
        assert_eq!(obstacle.len(), geometry.cell_count());
        Self {
            geometry,
            rects: Vec::new(),
            obstacle,
        }
    }

    pub fn is_obstacle(&self, cell: Cell) -> bool {
        self.obstacle[self.geometry.index(cell)]
    }

    /// Out-of-grid points carry no obstacle information.
    pub fn is_obstacle_at(&self, p: Point) -> bool {
        self.geometry
            .cell_of(p)
            .is_some_and(|c| self.is_obstacle(c))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommSite {
    pub x: f64,
    pub y: f64,
    pub range_m: f64,
}

impl CommSite {
    pub fn covers(&self, p: Point) -> bool {
        Point::new(self.x, self.y).distance(p) <= self.range_m
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FailureInjectors {
    /// Inclusive `[start, end]` step windows with no communication.
    #[serde(default)]
    pub comm_dropout: Vec<[u64; 2]>,
    /// Reported odometry over-counts by this fraction of every meter.
    #[serde(default)]
    pub odometry_drift_rate: f64,
}

impl FailureInjectors {
    pub fn in_dropout(&self, step: u64) -> bool {
        self.comm_dropout
            .iter()
            .any(|[a, b]| *a <= step && step <= *b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldScenario {
    pub id: String,
    pub truth: SemanticGraph,
    pub grid: TruthGrid,
    /// Obstacles the robot knows about before the mission starts.
    pub known_obstacles: Vec<Rect>,
    pub reveal_radius_m: f64,
    pub start_node: NodeId,
    pub comm_sites: Vec<CommSite>,
    pub profile: RobotProfile,
    pub goal: GoalPredicate,
    pub failures: FailureInjectors,
    pub seed: u64,
}

pub const DEFAULT_REVEAL_RADIUS_M: f64 = 15.0;

fn default_reveal() -> f64 {
    DEFAULT_REVEAL_RADIUS_M
}

#[derive(Serialize, Deserialize)]
struct GridFile {
    width: usize,
    height: usize,
    resolution: f64,
    origin: Point,
    #[serde(default)]
    obstacles: Vec<Rect>,
}

#[derive(Serialize, Deserialize)]
struct ScenarioFile {
    id: String,
    graph: SemanticGraph,
    grid: GridFile,
    #[serde(default)]
    known_obstacles: Vec<Rect>,
    #[serde(default = "default_reveal")]
    reveal_radius_m: f64,
    start_node: NodeId,
    #[serde(default)]
    comm_sites: Vec<CommSite>,
    #[serde(default)]
    profile: RobotProfile,
    goal: GoalPredicate,
    #[serde(default)]
    failures: FailureInjectors,
    #[serde(default)]
    seed: u64,
}

impl WorldScenario {
    /// Checks the scenario invariants.
    pub fn check(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        let Some(start) = self.truth.node(&self.start_node) else {
            return bad(format!("start node '{}' does not exist", self.start_node));
        };
        if !start.visible {
            return bad(format!("start node '{}' must be visible", self.start_node));
        }
        if self.profile.kind == RobotKind::Ugv
            && self.grid.geometry.cell_of(start.position).is_none()
        {
            return bad(format!(
                "start node '{}' lies outside the grid",
                self.start_node
            ));
        }
        if !(self.reveal_radius_m > 0.0) {
            return bad("reveal_radius_m must be positive".into());
        }
        if let Some(s) = self.comm_sites.iter().find(|s| !(s.range_m > 0.0)) {
            return bad(format!(
                "comm site at ({}, {}) needs a positive range",
                s.x, s.y
            ));
        }
        if !(self.failures.odometry_drift_rate >= 0.0) {
            return bad("odometry_drift_rate must be non-negative".into());
        }
        self.profile
            .check()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        self.check_goal_refs(&self.goal)
    }

    fn check_goal_refs(&self, goal: &GoalPredicate) -> Result<(), ScenarioError> {
        match goal {
            GoalPredicate::VisitNode(id) if !self.truth.contains(id) => Err(
                ScenarioError::Invalid(format!("goal references unknown node '{id}'")),
            ),
            GoalPredicate::NodeDiscovered(class)
                if !self.truth.classes().contains(class.as_str()) =>
            {
                Err(ScenarioError::Invalid(format!(
                    "goal references unknown class '{class}'"
                )))
            }
            GoalPredicate::All(parts) => parts.iter().try_for_each(|p| self.check_goal_refs(p)),
            _ => Ok(()),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let f: ScenarioFile = serde_json::from_str(text)?;
        let geometry = GridGeometry::new(
            f.grid.width,
            f.grid.height,
            f.grid.resolution,
            f.grid.origin,
        )
        .ok_or_else(|| {
            ScenarioError::Invalid("grid needs positive dimensions and resolution".into())
        })?;
        let s = WorldScenario {
            id: f.id,
            truth: f.graph,
            grid: TruthGrid::new(geometry, f.grid.obstacles),
            known_obstacles: f.known_obstacles,
            reveal_radius_m: f.reveal_radius_m,
            start_node: f.start_node,
            comm_sites: f.comm_sites,
            profile: f.profile,
            goal: f.goal,
            failures: f.failures,
            seed: f.seed,
        };
        s.check()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Scenario file text. Only rectangle-authored grids survive a
    /// round-trip; mask grids are written without obstacles.
    pub fn to_json(&self) -> String {
        let f = ScenarioFile {
            id: self.id.clone(),
            graph: self.truth.clone(),
            grid: GridFile {
                width: self.grid.geometry.width,
                height: self.grid.geometry.height,
                resolution: self.grid.geometry.resolution,
                origin: self.grid.geometry.origin,
                obstacles: self.grid.rects.clone(),
            },
            known_obstacles: self.known_obstacles.clone(),
            reveal_radius_m: self.reveal_radius_m,
            start_node: self.start_node.clone(),
            comm_sites: self.comm_sites.clone(),
            profile: self.profile.clone(),
            goal: self.goal.clone(),
            failures: self.failures.clone(),
            seed: self.seed,
        };
        serde_json::to_string_pretty(&f).expect("scenario serializes")
    }

    /// The robot at the start node, knowing only initially visible content.
    pub fn initial_state(&self) -> RobotState {
        let known = self.truth.induced(|n| n.visible);
        let mut known_occ = KnownOccupancy::unknown(self.grid.geometry);
        for r in &self.known_obstacles {
            for c in self.grid.geometry.cells_in_rect(r) {
                known_occ.set(c, CellState::Obstacle);
            }
        }
        let start = self.truth.node(&self.start_node).expect("checked scenario");
        RobotState {
            at: self.start_node.clone(),
            pose: start.position,
            odometer_m: 0.0,
            reported_odometer_m: 0.0,
            known,
            known_occ,
            step: 0,
            blocked: Default::default(),
        }
    }
}

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Behavior;
use crate::geometry::{polygon_contains, polygon_is_simple, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobotKind {
    Ugv,
    Uav,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfileError {
    #[error("uav profile needs at least one waypoint")]
    NoWaypoints,
    #[error("uav geofence must be a simple polygon with at least 3 vertices")]
    BadGeofence,
    #[error("behavior '{0}' is not available to a uav")]
    BehaviorNotAllowed(Behavior),
    #[error("waypoint ({0}, {1}) lies outside the geofence")]
    WaypointOutsideGeofence(f64, f64),
}

/// What a robot can do and where it may go.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobotProfile {
    pub kind: RobotKind,
    pub waypoints: Vec<Point>,
    pub geofence: Vec<Point>,
    pub allowed_behaviors: BTreeSet<Behavior>,
}

const UAV_BEHAVIORS: [Behavior; 6] = [
    Behavior::Inspect,
    Behavior::MapRegion,
    Behavior::ExploreRegion,
    Behavior::Goto,
    Behavior::Answer,
    Behavior::Clarify,
];

impl RobotProfile {
    /// Ground robot with the full behavior set.
    pub fn ugv() -> Self {
        Self {
            kind: RobotKind::Ugv,
            waypoints: Vec::new(),
            geofence: Vec::new(),
            allowed_behaviors: Behavior::ALL.into_iter().collect(),
        }
    }

    /// Aerial robot restricted to pre-defined waypoints inside a geofence.
    pub fn uav(waypoints: Vec<Point>, geofence: Vec<Point>) -> Result<Self, ProfileError> {
        let p = Self {
            kind: RobotKind::Uav,
            waypoints,
            geofence,
            allowed_behaviors: UAV_BEHAVIORS.into_iter().collect(),
        };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<(), ProfileError> {
        if self.kind == RobotKind::Ugv {
            return Ok(());
        }
        if self.waypoints.is_empty() {
            return Err(ProfileError::NoWaypoints);
        }
        if !polygon_is_simple(&self.geofence) {
            return Err(ProfileError::BadGeofence);
        }
        if let Some(b) = self
            .allowed_behaviors
            .iter()
            .find(|b| !UAV_BEHAVIORS.contains(b))
        {
            return Err(ProfileError::BehaviorNotAllowed(*b));
        }
        if let Some(w) = self
            .waypoints
            .iter()
            .find(|w| !polygon_contains(&self.geofence, **w))
        {
            return Err(ProfileError::WaypointOutsideGeofence(w.x, w.y));
        }
        Ok(())
    }

    pub fn allows(&self, b: Behavior) -> bool {
        self.allowed_behaviors.contains(&b)
    }

    pub fn inside_geofence(&self, p: Point) -> bool {
        self.kind == RobotKind::Ugv || polygon_contains(&self.geofence, p)
    }

    /// The waypoint closest to `p` (first one on ties).
    pub fn nearest_waypoint(&self, p: Point) -> Option<Point> {
        self.waypoints
            .iter()
            .copied()
            .fold(None, |best: Option<Point>, w| match best {
                Some(b) if b.distance(p) <= w.distance(p) => Some(b),
                _ => Some(w),
            })
    }
}

impl Default for RobotProfile {
    fn default() -> Self {
        Self::ugv()
    }
}

#[derive(Deserialize)]
struct ProfileRecord {
    kind: RobotKind,
    #[serde(default)]
    waypoints: Vec<Point>,
    #[serde(default)]
    geofence: Vec<Point>,
    #[serde(default)]
    allowed_behaviors: Option<BTreeSet<Behavior>>,
}

impl<'de> Deserialize<'de> for RobotProfile {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = ProfileRecord::deserialize(d)?;
        let mut p = match r.kind {
            RobotKind::Ugv => RobotProfile::ugv(),
            RobotKind::Uav => RobotProfile {
                kind: RobotKind::Uav,
                waypoints: Vec::new(),
                geofence: Vec::new(),
                allowed_behaviors: UAV_BEHAVIORS.into_iter().collect(),
            },
        };
        p.waypoints = r.waypoints;
        p.geofence = r.geofence;
        if let Some(allowed) = r.allowed_behaviors {
            p.allowed_behaviors = allowed;
        }
        p.check().map_err(serde::de::Error::custom)?;
        Ok(p)
    }
}

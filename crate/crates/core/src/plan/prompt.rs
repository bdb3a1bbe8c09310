//! Prompt assembly.
//!
//! The system part describes the behavior API for a robot profile. The user
//! part carries, in order: the canonical graph, the robot's location, the
//! mission text and the history entries. Rendering is a pure function of its
//! arguments.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Behavior, RobotKind, RobotProfile};
use crate::geometry::Point;
use crate::graph::{parse_graph, serialize_graph, GraphError, NodeId, SemanticGraph};

const GRAPH_HEADER: &str = "## Semantic graph\n";
const ROBOT_HEADER: &str = "\n\n## Robot\n";
const MISSION_HEADER: &str = "\n\n## Mission\n";
const HISTORY_HEADER: &str = "\n\n## History\n";

/// An entry in the append-only prompt history.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "text", rename_all = "snake_case")]
pub enum HistoryEntry {
    /// Validator feedback on a rejected plan.
    Feedback(String),
    /// Rendered map diff.
    MapUpdate(String),
    /// Execution observations: inspection results, blocked paths, comm events.
    Observation(String),
    /// Follow-up text from the operator.
    Operator(String),
}

impl HistoryEntry {
    fn label(&self) -> &'static str {
        match self {
            HistoryEntry::Feedback(_) => "[feedback]",
            HistoryEntry::MapUpdate(_) => "[map update]",
            HistoryEntry::Observation(_) => "[observation]",
            HistoryEntry::Operator(_) => "[operator]",
        }
    }

    pub fn text(&self) -> &str {
        match self {
            HistoryEntry::Feedback(t)
            | HistoryEntry::MapUpdate(t)
            | HistoryEntry::Observation(t)
            | HistoryEntry::Operator(t) => t,
        }
    }
}

/// Where the robot is when the prompt is rendered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotContext {
    pub at: NodeId,
    pub pose: Point,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

impl Prompt {
    /// The whole prompt as one string.
    pub fn text(&self) -> String {
        format!("{}\n\n{}", self.system, self.user)
    }

    /// Hex SHA-256 of [`Prompt::text`].
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.text().as_bytes()))
    }
}

fn behavior_line(b: Behavior) -> &'static str {
    match b {
        Behavior::Goto => "- goto {\"node\": <node id>}: travel to a region or object over traversable edges.",
        Behavior::MapRegion => "- map_region {\"region\": <region id>, \"classes\": [<class>, ...] (optional)}: map the objects inside a region.",
        Behavior::ExploreRegion => "- explore_region {\"region\": <region id>, \"radius_m\": <meters>}: drive to a region and sweep it out to the radius.",
        Behavior::ExtendMap => "- extend_map {\"x\": <meters>, \"y\": <meters>}: drive toward a point to extend the map into unknown space.",
        Behavior::Inspect => "- inspect {\"node\": <node id>, \"query\": <question>}: look closely at a node and report what is there.",
        Behavior::Answer => "- answer {\"text\": <answer>}: report the mission result to the operator and finish.",
        Behavior::Clarify => "- clarify {\"question\": <question>}: ask the operator a question and wait.",
    }
}

fn fmt_point(p: Point) -> String {
    format!("({:.3}, {:.3})", p.x, p.y)
}

/// Behavior API description for a profile.
pub fn system_prompt(profile: &RobotProfile) -> String {
    let robot = match profile.kind {
        RobotKind::Ugv => "a ground robot",
        RobotKind::Uav => "an aerial robot",
    };
    let mut s = format!(
        "You plan missions for {robot} operating in a partially known environment.\n\
         The semantic graph lists region and object nodes with planar coordinates in meters, \
         traversability edges between regions and containment edges from regions to objects. \
         Nodes you have not discovered yet are not in the graph.\n\n\
         Reply with one JSON object, optionally inside a ``` fence:\n\
         {{\"reasoning\": <string>, \"tasks\": [{{\"behavior\": <name>, \"args\": {{...}}}}, ...]}}\n\n\
         Behaviors:\n"
    );
    for b in Behavior::ALL.into_iter().filter(|b| profile.allows(*b)) {
        s.push_str(behavior_line(b));
        s.push('\n');
    }
    s.push_str(
        "\nRules:\n\
         - Only reference node ids present in the graph.\n\
         - Targets must be reachable from the robot over traversability edges.\n\
         - answer or clarify may appear once, as the last task.\n\
         - After new map content appears you will be asked to plan again.",
    );
    if profile.kind == RobotKind::Uav {
        let wps: Vec<String> = profile.waypoints.iter().map(|p| fmt_point(*p)).collect();
        let fence: Vec<String> = profile.geofence.iter().map(|p| fmt_point(*p)).collect();
        s.push_str(&format!(
            "\n- goto flies to the pre-defined waypoint nearest the target: {}.\n\
             - Every target must lie inside the geofence polygon: {}.",
            wps.join(", "),
            fence.join(", ")
        ));
    }
    s
}

/// Assembles the prompt for one planning call.
pub fn render_prompt(
    spec: &str,
    graph: &SemanticGraph,
    profile: &RobotProfile,
    robot: &RobotContext,
    history: &[HistoryEntry],
) -> Prompt {
    let mut user = String::new();
    user.push_str(GRAPH_HEADER);
    user.push_str(serialize_graph(graph).trim_end());
    user.push_str(ROBOT_HEADER);
    user.push_str(&format!(
        "at: {}\npose: {}",
        robot.at,
        fmt_point(robot.pose)
    ));
    user.push_str(MISSION_HEADER);
    user.push_str(spec);
    if !history.is_empty() {
        user.push_str(HISTORY_HEADER);
        let entries: Vec<String> = history
            .iter()
            .map(|h| format!("{}\n{}", h.label(), h.text()))
            .collect();
        user.push_str(&entries.join("\n"));
    }
    Prompt {
        system: system_prompt(profile),
        user,
    }
}

/// Recovers the graph embedded in a rendered user message.
pub fn extract_graph(user: &str) -> Result<SemanticGraph, GraphError> {
    let missing = |what: &str| GraphError::Parse {
        line: 0,
        column: 0,
        reason: format!("prompt has no {what} section"),
    };
    let start = user.find(GRAPH_HEADER).ok_or_else(|| missing("graph"))? + GRAPH_HEADER.len();
    let end = user[start..]
        .find(ROBOT_HEADER)
        .map(|i| start + i)
        .ok_or_else(|| missing("robot"))?;
    parse_graph(&user[start..end])
}

/// Recovers the robot's node from a rendered user message.
pub fn extract_robot(user: &str) -> Option<NodeId> {
    extract_context(user).map(|c| c.at)
}

/// Recovers the robot's node and pose from a rendered user message.
pub fn extract_context(user: &str) -> Option<RobotContext> {
    let start = user.find(ROBOT_HEADER)? + ROBOT_HEADER.len();
    let mut lines = user[start..].lines();
    let at = NodeId::new(lines.next()?.strip_prefix("at: ")?).ok()?;
    let pose = lines.next()?.strip_prefix("pose: (")?.strip_suffix(')')?;
    let (x, y) = pose.split_once(", ")?;
    Some(RobotContext {
        at,
        pose: Point::new(x.parse().ok()?, y.parse().ok()?),
    })
}

/// Recovers the mission text from a rendered user message.
pub fn extract_mission(user: &str) -> Option<&str> {
    let start = user.find(MISSION_HEADER)? + MISSION_HEADER.len();
    let rest = &user[start..];
    Some(rest.rfind(HISTORY_HEADER).map_or(rest, |i| &rest[..i]))
}

/// The rendered history section, empty when there is none.
pub fn extract_history(user: &str) -> &str {
    let Some(m) = user.find(MISSION_HEADER) else {
        return "";
    };
    match user[m..].rfind(HISTORY_HEADER) {
        Some(i) => &user[m + i + HISTORY_HEADER.len()..],
        None => "",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::tests::sample;

    fn ctx() -> RobotContext {
        RobotContext {
            at: NodeId::new("home").unwrap(),
            pose: Point::new(0.0, 0.0),
        }
    }

    #[test]
    fn graph_and_spec_appear_once() {
        let g = sample();
        let spec = "Is there activity in the southern parking lot?";
        let p = render_prompt(spec, &g, &RobotProfile::ugv(), &ctx(), &[]);
        let text = p.text();
        assert_eq!(text.matches(spec).count(), 1);
        assert_eq!(text.matches(serialize_graph(&g).trim_end()).count(), 1);
        assert!(!text.contains("## History"));
        assert!(!p.system.contains("[feedback]"));
    }

    #[test]
    fn history_entries_come_last_in_order() {
        let diff = "ADDED node car_2 (car) at (1.000, 2.000)";
        let hist = vec![
            HistoryEntry::Feedback("Task 0 (goto): syntax violation".into()),
            HistoryEntry::MapUpdate(diff.into()),
        ];
        let p = render_prompt("go", &sample(), &RobotProfile::ugv(), &ctx(), &hist);
        assert!(p.user.ends_with(diff));
        let fb = p.user.find("[feedback]").unwrap();
        let mu = p.user.find("[map update]").unwrap();
        assert!(fb < mu);
    }

    #[test]
    fn rendering_is_deterministic() {
        let hist = vec![HistoryEntry::Operator("I meant the northern lot".into())];
        let a = render_prompt("x", &sample(), &RobotProfile::ugv(), &ctx(), &hist);
        let b = render_prompt("x", &sample(), &RobotProfile::ugv(), &ctx(), &hist);
        assert_eq!(a.text().as_bytes(), b.text().as_bytes());
        assert_eq!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn extraction_inverts_rendering() {
        let spec = "## Robot\nat: fake\n{}";
        let p = render_prompt(spec, &sample(), &RobotProfile::ugv(), &ctx(), &[]);
        assert_eq!(extract_graph(&p.user).unwrap(), sample());
        assert_eq!(extract_robot(&p.user).unwrap().as_str(), "home");
        assert_eq!(extract_context(&p.user).unwrap(), ctx());
        assert_eq!(extract_mission(&p.user), Some(spec));
        assert_eq!(extract_history(&p.user), "");
        let hist = [HistoryEntry::Operator("more".into())];
        let p = render_prompt(spec, &sample(), &RobotProfile::ugv(), &ctx(), &hist);
        assert_eq!(extract_mission(&p.user), Some(spec));
        assert_eq!(extract_history(&p.user), "[operator]\nmore");
    }

    #[test]
    fn uav_prompt_lists_only_uav_behaviors() {
        let fence = vec![
            Point::new(-1.0, -1.0),
            Point::new(50.0, -1.0),
            Point::new(50.0, 50.0),
            Point::new(-1.0, 50.0),
        ];
        let p = RobotProfile::uav(vec![Point::new(0.0, 0.0)], fence).unwrap();
        let s = system_prompt(&p);
        assert!(!s.contains("extend_map"));
        assert!(s.contains("geofence"));
    }
}

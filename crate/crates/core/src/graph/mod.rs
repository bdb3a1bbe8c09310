//! Semantic map: region and object nodes joined by traversability and
//! containment edges.
//!
//! Graphs are values. Every constructor and mutator re-checks the edge-kind
//! rules, so a `SemanticGraph` that exists is always well formed. All read
//! operations iterate in id order.

mod diff;
mod format;
mod merge;
mod path;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{quantize, Point};

pub use diff::GraphDiff;
pub use format::{parse_graph, serialize_graph};
pub use merge::{merge, MERGE_DISTANCE_M};
pub use path::{reachable, shortest_path, shortest_path_avoiding, PathResult};

/// Changes turning `base` into `updated`.
pub fn diff(base: &SemanticGraph, updated: &SemanticGraph) -> GraphDiff {
    GraphDiff::between(base, updated)
}

/// Applies `d` to `base`, rejecting collisions and dangling references.
pub fn apply(base: &SemanticGraph, d: &GraphDiff) -> Result<SemanticGraph, GraphError> {
    d.apply_to(base)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("invalid node id '{0}': expected lowercase letters, digits and underscores")]
    InvalidId(String),
    #[error("unknown node '{0}'")]
    UnknownNode(NodeId),
    #[error("duplicate node '{0}'")]
    DuplicateNode(NodeId),
    #[error("node '{id}' has invalid {field}: {reason}")]
    InvalidNode {
        id: NodeId,
        field: &'static str,
        reason: String,
    },
    #[error("edge {a} -- {b}: {reason}")]
    InvalidEdge {
        a: NodeId,
        b: NodeId,
        reason: String,
    },
    #[error("duplicate edge {0} -- {1}")]
    DuplicateEdge(NodeId, NodeId),
    #[error("missing edge {0} -- {1}")]
    MissingEdge(NodeId, NodeId),
    #[error("no path from '{from}' to '{to}'")]
    NoPath { from: NodeId, to: NodeId },
    #[error("parse error at line {line}, column {column}: {reason}")]
    Parse {
        line: usize,
        column: usize,
        reason: String,
    },
}

/// Node identifier: non-empty, lowercase alphanumerics and underscores.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Result<Self, GraphError> {
        let id = id.into();
        if Self::is_valid(&id) {
            Ok(Self(id))
        } else {
            Err(GraphError::InvalidId(id))
        }
    }

    pub fn is_valid(s: &str) -> bool {
        !s.is_empty()
            && s.bytes()
                .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for NodeId {
    type Error = GraphError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl TryFrom<&str> for NodeId {
    type Error = GraphError;
    fn try_from(value: &str) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<NodeId> for String {
    fn from(id: NodeId) -> Self {
        id.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for NodeId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Region,
    Object,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Region => "region",
            NodeKind::Object => "object",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Traversability,
    Containment,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Traversability => "traversability",
            EdgeKind::Containment => "containment",
        }
    }
}

/// A map node. Positions are stored on the millimetre grid so that the
/// canonical text form round-trips exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub class: String,
    pub position: Point,
    pub description: String,
    pub visible: bool,
}

impl Node {
    pub fn new(id: NodeId, kind: NodeKind, class: impl Into<String>, x: f64, y: f64) -> Self {
        Self {
            id,
            kind,
            class: class.into(),
            position: Point::new(quantize(x), quantize(y)),
            description: String::new(),
            visible: true,
        }
    }

    pub fn region(id: &str, class: &str, x: f64, y: f64) -> Result<Self, GraphError> {
        Ok(Self::new(NodeId::new(id)?, NodeKind::Region, class, x, y))
    }

    pub fn object(id: &str, class: &str, x: f64, y: f64) -> Result<Self, GraphError> {
        Ok(Self::new(NodeId::new(id)?, NodeKind::Object, class, x, y))
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }

    pub fn hidden(mut self) -> Self {
        self.visible = false;
        self
    }

    pub fn with_visible(mut self, visible: bool) -> Self {
        self.visible = visible;
        self
    }

    pub fn set_position(&mut self, p: Point) {
        self.position = Point::new(quantize(p.x), quantize(p.y));
    }

    fn check(&self) -> Result<(), GraphError> {
        let bad = |field, reason: &str| GraphError::InvalidNode {
            id: self.id.clone(),
            field,
            reason: reason.to_string(),
        };
        if self.class.trim().is_empty() {
            return Err(bad("class", "must be non-empty"));
        }
        if !self.position.is_finite() {
            return Err(bad("position", "coordinates must be finite"));
        }
        Ok(())
    }
}

/// Undirected edge, stored with `a < b`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub a: NodeId,
    pub b: NodeId,
    pub kind: EdgeKind,
}

impl Edge {
    pub fn new(a: NodeId, b: NodeId, kind: EdgeKind) -> Self {
        if a <= b {
            Self { a, b, kind }
        } else {
            Self { a: b, b: a, kind }
        }
    }

    pub fn traversability(a: &str, b: &str) -> Result<Self, GraphError> {
        Ok(Self::new(
            NodeId::new(a)?,
            NodeId::new(b)?,
            EdgeKind::Traversability,
        ))
    }

    pub fn containment(a: &str, b: &str) -> Result<Self, GraphError> {
        Ok(Self::new(
            NodeId::new(a)?,
            NodeId::new(b)?,
            EdgeKind::Containment,
        ))
    }

    pub fn key(&self) -> (NodeId, NodeId) {
        (self.a.clone(), self.b.clone())
    }

    pub fn other(&self, id: &NodeId) -> Option<&NodeId> {
        if &self.a == id {
            Some(&self.b)
        } else if &self.b == id {
            Some(&self.a)
        } else {
            None
        }
    }
}

type EdgeKey = (NodeId, NodeId);

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SemanticGraph {
    nodes: BTreeMap<NodeId, Node>,
    edges: BTreeMap<EdgeKey, EdgeKind>,
    adjacency: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

impl SemanticGraph {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Checked constructor.
    pub fn new(
        nodes: impl IntoIterator<Item = Node>,
        edges: impl IntoIterator<Item = Edge>,
    ) -> Result<Self, GraphError> {
        let mut g = Self::default();
        for n in nodes {
            g.insert_node(n)?;
        }
        for e in edges {
            g.insert_edge(e)?;
        }
        Ok(g)
    }

    pub fn insert_node(&mut self, node: Node) -> Result<(), GraphError> {
        node.check()?;
        if self.nodes.contains_key(&node.id) {
            return Err(GraphError::DuplicateNode(node.id));
        }
        self.adjacency.entry(node.id.clone()).or_default();
        self.nodes.insert(node.id.clone(), node);
        Ok(())
    }

    /// Replaces an existing node's attributes. Kind changes are rejected if
    /// they would break an incident edge.
    pub fn replace_node(&mut self, node: Node) -> Result<(), GraphError> {
        node.check()?;
        let Some(old) = self.nodes.get(&node.id) else {
            return Err(GraphError::UnknownNode(node.id));
        };
        if old.kind != node.kind {
            for other in &self.adjacency[&node.id] {
                let kind = self.edges[&ordered(&node.id, other)];
                let other_kind = self.nodes[other].kind;
                check_edge_kinds(&node.id, node.kind, other, other_kind, kind)?;
            }
        }
        self.nodes.insert(node.id.clone(), node);
        Ok(())
    }

    pub fn insert_edge(&mut self, edge: Edge) -> Result<(), GraphError> {
        if edge.a == edge.b {
            return Err(GraphError::InvalidEdge {
                a: edge.a,
                b: edge.b,
                reason: "self-loop".into(),
            });
        }
        let ka = self
            .nodes
            .get(&edge.a)
            .ok_or_else(|| GraphError::UnknownNode(edge.a.clone()))?
            .kind;
        let kb = self
            .nodes
            .get(&edge.b)
            .ok_or_else(|| GraphError::UnknownNode(edge.b.clone()))?
            .kind;
        check_edge_kinds(&edge.a, ka, &edge.b, kb, edge.kind)?;
        let key = edge.key();
        if self.edges.contains_key(&key) {
            return Err(GraphError::DuplicateEdge(edge.a, edge.b));
        }
        self.adjacency
            .get_mut(&edge.a)
            .unwrap()
            .insert(edge.b.clone());
        self.adjacency
            .get_mut(&edge.b)
            .unwrap()
            .insert(edge.a.clone());
        self.edges.insert(key, edge.kind);
        Ok(())
    }

    pub fn remove_edge(&mut self, a: &NodeId, b: &NodeId) -> Result<EdgeKind, GraphError> {
        let key = ordered(a, b);
        let kind = self
            .edges
            .remove(&key)
            .ok_or_else(|| GraphError::MissingEdge(key.0.clone(), key.1.clone()))?;
        self.adjacency.get_mut(a).unwrap().remove(b);
        self.adjacency.get_mut(b).unwrap().remove(a);
        Ok(kind)
    }

    /// Removes a node and every incident edge.
    pub fn remove_node(&mut self, id: &NodeId) -> Result<Node, GraphError> {
        let node = self
            .nodes
            .remove(id)
            .ok_or_else(|| GraphError::UnknownNode(id.clone()))?;
        let neighbors = self.adjacency.remove(id).unwrap_or_default();
        for other in neighbors {
            self.edges.remove(&ordered(id, &other));
            if let Some(set) = self.adjacency.get_mut(&other) {
                set.remove(id);
            }
        }
        Ok(node)
    }

    pub fn node(&self, id: &NodeId) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn node_by_str(&self, id: &str) -> Option<&Node> {
        NodeId::new(id).ok().and_then(|id| self.nodes.get(&id))
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> + '_ {
        self.nodes.values()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &NodeId> + '_ {
        self.nodes.keys()
    }

    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.edges
            .iter()
            .map(|((a, b), k)| Edge::new(a.clone(), b.clone(), *k))
    }

    pub fn edge_kind(&self, a: &NodeId, b: &NodeId) -> Option<EdgeKind> {
        self.edges.get(&ordered(a, b)).copied()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Neighbors in id order.
    pub fn neighbors<'a>(
        &'a self,
        id: &NodeId,
    ) -> impl Iterator<Item = (&'a NodeId, EdgeKind)> + 'a {
        let key = id.clone();
        self.adjacency
            .get(id)
            .into_iter()
            .flatten()
            .map(move |other| (other, self.edges[&ordered(&key, other)]))
    }

    /// Regions this object is contained in (the node itself for a region).
    pub fn containing_regions(&self, id: &NodeId) -> Vec<&NodeId> {
        match self.nodes.get(id).map(|n| n.kind) {
            Some(NodeKind::Region) => vec![self.nodes.get_key_value(id).unwrap().0],
            Some(NodeKind::Object) => self
                .neighbors(id)
                .filter(|(_, k)| *k == EdgeKind::Containment)
                .map(|(o, _)| o)
                .collect(),
            None => Vec::new(),
        }
    }

    /// The region closest to `p`, ties broken by id.
    pub fn nearest_region(&self, p: Point) -> Option<&Node> {
        self.nodes
            .values()
            .filter(|n| n.kind == NodeKind::Region)
            .fold(None, |best: Option<(&Node, f64)>, n| {
                let d = n.position.distance(p);
                match best {
                    Some((_, bd)) if bd <= d => best,
                    _ => Some((n, d)),
                }
            })
            .map(|(n, _)| n)
    }

    /// Subgraph induced by the nodes for which `keep` returns true.
    pub fn induced(&self, keep: impl Fn(&Node) -> bool) -> SemanticGraph {
        let mut g = SemanticGraph::default();
        for n in self.nodes.values().filter(|n| keep(n)) {
            g.insert_node(n.clone()).expect("subset of a valid graph");
        }
        for e in self.edges() {
            if g.contains(&e.a) && g.contains(&e.b) {
                g.insert_edge(e).expect("subset of a valid graph");
            }
        }
        g
    }

    /// True when every node and edge of `self` also appears in `other`,
    /// ignoring the `visible` flag.
    pub fn is_subgraph_of(&self, other: &SemanticGraph) -> bool {
        self.nodes.values().all(|n| {
            other.node(&n.id).is_some_and(|o| {
                o.kind == n.kind
                    && o.class == n.class
                    && o.position == n.position
                    && o.description == n.description
            })
        }) && self
            .edges
            .iter()
            .all(|(k, kind)| other.edges.get(k) == Some(kind))
    }

    /// Distinct node classes in sorted order.
    pub fn classes(&self) -> BTreeSet<&str> {
        self.nodes.values().map(|n| n.class.as_str()).collect()
    }
}

fn ordered(a: &NodeId, b: &NodeId) -> EdgeKey {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

fn check_edge_kinds(
    a: &NodeId,
    ka: NodeKind,
    b: &NodeId,
    kb: NodeKind,
    kind: EdgeKind,
) -> Result<(), GraphError> {
    let ok = match kind {
        EdgeKind::Traversability => ka == NodeKind::Region && kb == NodeKind::Region,
        EdgeKind::Containment => ka != kb,
    };
    if ok {
        return Ok(());
    }
    let reason = match (ka, kb) {
        (NodeKind::Object, NodeKind::Object) => "object-object edges are not allowed".to_string(),
        _ => format!(
            "{} edge cannot join {} and {}",
            kind.as_str(),
            ka.as_str(),
            kb.as_str()
        ),
    };
    let (a, b) = ordered(a, b);
    Err(GraphError::InvalidEdge { a, b, reason })
}

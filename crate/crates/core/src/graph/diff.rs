use serde::{Deserialize, Serialize};

use super::{Edge, GraphError, Node, NodeId, SemanticGraph};

/// Structured difference between two graphs. Every list is sorted by id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphDiff {
    #[serde(default)]
    pub added_nodes: Vec<Node>,
    #[serde(default)]
    pub added_edges: Vec<Edge>,
    #[serde(default)]
    pub changed_nodes: Vec<Node>,
    #[serde(default)]
    pub removed_edges: Vec<Edge>,
    #[serde(default)]
    pub removed_nodes: Vec<NodeId>,
}

impl GraphDiff {
    pub fn is_empty(&self) -> bool {
        self.added_nodes.is_empty()
            && self.added_edges.is_empty()
            && self.changed_nodes.is_empty()
            && self.removed_edges.is_empty()
            && self.removed_nodes.is_empty()
    }

    /// Changes needed to turn `base` into `updated`.
    pub fn between(base: &SemanticGraph, updated: &SemanticGraph) -> GraphDiff {
        let mut d = GraphDiff::default();
        for n in updated.nodes() {
            match base.node(&n.id) {
                None => d.added_nodes.push(n.clone()),
                Some(old) if old != n => d.changed_nodes.push(n.clone()),
                Some(_) => {}
            }
        }
        d.removed_nodes = base
            .node_ids()
            .filter(|id| !updated.contains(id))
            .cloned()
            .collect();
        for e in updated.edges() {
            match base.edge_kind(&e.a, &e.b) {
                Some(k) if k == e.kind => {}
                Some(k) => {
                    d.removed_edges.push(Edge::new(e.a.clone(), e.b.clone(), k));
                    d.added_edges.push(e);
                }
                None => d.added_edges.push(e),
            }
        }
        for e in base.edges() {
            if updated.edge_kind(&e.a, &e.b).is_none() {
                d.removed_edges.push(e);
            }
        }
        d.removed_edges.sort();
        d
    }

    /// Applies the diff to `base`, producing a new checked graph.
    pub fn apply_to(&self, base: &SemanticGraph) -> Result<SemanticGraph, GraphError> {
        for r in &self.removed_nodes {
            if self.added_nodes.iter().any(|n| &n.id == r)
                || self.changed_nodes.iter().any(|n| &n.id == r)
            {
                return Err(GraphError::InvalidNode {
                    id: r.clone(),
                    field: "diff",
                    reason: "node is both removed and added or changed".into(),
                });
            }
        }
        let mut g = base.clone();
        for e in &self.removed_edges {
            match g.edge_kind(&e.a, &e.b) {
                Some(k) if k == e.kind => {
                    g.remove_edge(&e.a, &e.b)?;
                }
                _ => return Err(GraphError::MissingEdge(e.a.clone(), e.b.clone())),
            }
        }
        for id in &self.removed_nodes {
            if let Some((other, _)) = g.neighbors(id).next() {
                return Err(GraphError::InvalidEdge {
                    a: id.clone(),
                    b: other.clone(),
                    reason: "edge left dangling by node removal".into(),
                });
            }
            g.remove_node(id)?;
        }
        for n in &self.changed_nodes {
            g.replace_node(n.clone())?;
        }
        for n in &self.added_nodes {
            g.insert_node(n.clone())?;
        }
        for e in &self.added_edges {
            g.insert_edge(e.clone())?;
        }
        Ok(g)
    }

    /// One line per change, grouped by change type and sorted by id.
    pub fn render_text(&self) -> String {
        let mut lines = Vec::new();
        for n in &self.added_nodes {
            lines.push(format!("ADDED node {}", describe(n)));
        }
        for e in &self.added_edges {
            lines.push(format!("ADDED edge {} -- {}", e.a, e.b));
        }
        for n in &self.changed_nodes {
            lines.push(format!("CHANGED node {}", describe(n)));
        }
        for e in &self.removed_edges {
            lines.push(format!("REMOVED edge {} -- {}", e.a, e.b));
        }
        for id in &self.removed_nodes {
            lines.push(format!("REMOVED node {id}"));
        }
        lines.join("\n")
    }
}

fn describe(n: &Node) -> String {
    let mut s = format!(
        "{} ({}) at ({:.3}, {:.3})",
        n.id, n.class, n.position.x, n.position.y
    );
    if !n.description.is_empty() {
        s.push_str(": ");
        s.push_str(&n.description.replace(['\n', '\r'], " "));
    }
    s
}

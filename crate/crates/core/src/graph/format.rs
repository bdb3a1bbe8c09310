//! Graph file format.
//!
//! `{"edges":[{"a","b","kind"}...],"nodes":[{"class","desc","id","kind","visible","x","y"}...]}`
//!
//! The canonical form sorts keys and elements, prints one element per line
//! and writes coordinates with exactly three decimals.

use serde::{Deserialize, Serialize};

use super::{Edge, EdgeKind, GraphError, Node, NodeId, NodeKind, SemanticGraph};

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    id: NodeId,
    kind: NodeKind,
    class: String,
    x: f64,
    y: f64,
    #[serde(default)]
    desc: String,
    #[serde(default = "default_visible")]
    visible: bool,
}

fn default_visible() -> bool {
    true
}

impl From<NodeRecord> for Node {
    fn from(r: NodeRecord) -> Self {
        Node::new(r.id, r.kind, r.class, r.x, r.y)
            .with_description(r.desc)
            .with_visible(r.visible)
    }
}

impl From<Node> for NodeRecord {
    fn from(n: Node) -> Self {
        NodeRecord {
            id: n.id,
            kind: n.kind,
            class: n.class,
            x: n.position.x,
            y: n.position.y,
            desc: n.description,
            visible: n.visible,
        }
    }
}

impl Serialize for Node {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        NodeRecord::from(self.clone()).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Node {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        NodeRecord::deserialize(d).map(Node::from)
    }
}

#[derive(Serialize, Deserialize)]
struct EdgeRecord {
    a: NodeId,
    b: NodeId,
    kind: EdgeKind,
}

impl Serialize for Edge {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        EdgeRecord {
            a: self.a.clone(),
            b: self.b.clone(),
            kind: self.kind,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Edge {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = EdgeRecord::deserialize(d)?;
        Ok(Edge::new(r.a, r.b, r.kind))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphRecord {
    #[serde(default)]
    nodes: Vec<NodeRecord>,
    #[serde(default)]
    edges: Vec<EdgeRecord>,
}

impl Serialize for SemanticGraph {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("SemanticGraph", 2)?;
        st.serialize_field("edges", &self.edges().collect::<Vec<_>>())?;
        st.serialize_field("nodes", &self.nodes().collect::<Vec<_>>())?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for SemanticGraph {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = GraphRecord::deserialize(d)?;
        build(r, None).map_err(serde::de::Error::custom)
    }
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

/// Canonical text form, terminated by a newline.
pub fn serialize_graph(graph: &SemanticGraph) -> String {
    let edges: Vec<String> = graph
        .edges()
        .map(|e| {
            format!(
                "{{\"a\":{},\"b\":{},\"kind\":\"{}\"}}",
                json_str(e.a.as_str()),
                json_str(e.b.as_str()),
                e.kind.as_str()
            )
        })
        .collect();
    let nodes: Vec<String> = graph
        .nodes()
        .map(|n| {
            format!(
                "{{\"class\":{},\"desc\":{},\"id\":{},\"kind\":\"{}\",\"visible\":{},\"x\":{:.3},\"y\":{:.3}}}",
                json_str(&n.class),
                json_str(&n.description),
                json_str(n.id.as_str()),
                n.kind.as_str(),
                n.visible,
                n.position.x,
                n.position.y
            )
        })
        .collect();
    format!(
        "{{\"edges\":{},\n\"nodes\":{}}}\n",
        block(&edges),
        block(&nodes)
    )
}

fn block(items: &[String]) -> String {
    if items.is_empty() {
        "[]".to_string()
    } else {
        format!("[\n{}\n]", items.join(",\n"))
    }
}

/// Parses the graph file format (canonical or not).
pub fn parse_graph(text: &str) -> Result<SemanticGraph, GraphError> {
    let record: GraphRecord = serde_json::from_str(text).map_err(|e| GraphError::Parse {
        line: e.line(),
        column: e.column(),
        reason: strip_position(&e.to_string()),
    })?;
    build(record, Some(text))
}

fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

fn build(record: GraphRecord, text: Option<&str>) -> Result<SemanticGraph, GraphError> {
    let mut g = SemanticGraph::empty();
    for (i, n) in record.nodes.into_iter().enumerate() {
        let id = n.id.clone();
        g.insert_node(n.into())
            .map_err(|e| locate(text, "\"nodes\"", &id, format!("node {i}: {e}")))?;
    }
    for (i, e) in record.edges.into_iter().enumerate() {
        let edge = Edge::new(e.a, e.b, e.kind);
        let missing = [&edge.a, &edge.b]
            .into_iter()
            .find(|id| !g.contains(id))
            .cloned();
        g.insert_edge(edge.clone()).map_err(|err| {
            let anchor = missing.unwrap_or(edge.a.clone());
            locate(text, "\"edges\"", &anchor, format!("edge {i}: {err}"))
        })?;
    }
    Ok(g)
}

/// Turns a semantic error into a positioned parse error, pointing at the
/// first quoted occurrence of `id` after `section`.
fn locate(text: Option<&str>, section: &str, id: &NodeId, reason: String) -> GraphError {
    let Some(text) = text else {
        return GraphError::Parse {
            line: 0,
            column: 0,
            reason,
        };
    };
    let start = text.find(section).unwrap_or(0);
    let needle = format!("\"{id}\"");
    let offset = text[start..].find(&needle).map_or(start, |o| start + o);
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = offset - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    GraphError::Parse {
        line,
        column,
        reason,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::tests::sample;

    #[test]
    fn canonical_layout() {
        let text = serialize_graph(&sample());
        assert_eq!(
            text,
            concat!(
                "{\"edges\":[\n",
                "{\"a\":\"car_1\",\"b\":\"lot_a\",\"kind\":\"containment\"},\n",
                "{\"a\":\"home\",\"b\":\"lot_a\",\"kind\":\"traversability\"}\n",
                "],\n\"nodes\":[\n",
                "{\"class\":\"car\",\"desc\":\"red sedan\",\"id\":\"car_1\",\"kind\":\"object\",\"visible\":true,\"x\":4.000,\"y\":4.000},\n",
                "{\"class\":\"base\",\"desc\":\"\",\"id\":\"home\",\"kind\":\"region\",\"visible\":true,\"x\":0.000,\"y\":0.000},\n",
                "{\"class\":\"parking_lot\",\"desc\":\"\",\"id\":\"lot_a\",\"kind\":\"region\",\"visible\":true,\"x\":3.000,\"y\":4.000}\n",
                "]}\n"
            )
        );
        assert_eq!(parse_graph(&text).unwrap(), sample());
        assert_eq!(
            serialize_graph(&SemanticGraph::empty()),
            "{\"edges\":[],\n\"nodes\":[]}\n"
        );
    }

    #[test]
    fn accepts_loose_input() {
        let g = parse_graph(
            r#"{"nodes":[{"id":"b","kind":"region","class":"road","x":1,"y":2},
                         {"id":"a","kind":"region","class":"road","x":0,"y":0,"visible":false}],
                "edges":[{"a":"b","b":"a","kind":"traversability"}]}"#,
        )
        .unwrap();
        assert_eq!(g.node_count(), 2);
        assert!(!g.node_by_str("a").unwrap().visible);
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn unknown_edge_endpoint_is_named_and_located() {
        let text = "{\"nodes\":[{\"id\":\"a\",\"kind\":\"region\",\"class\":\"road\",\"x\":0,\"y\":0}],\n\"edges\":[{\"a\":\"a\",\"b\":\"ghost\",\"kind\":\"traversability\"}]}";
        let err = parse_graph(text).unwrap_err();
        let GraphError::Parse {
            line,
            column,
            reason,
        } = &err
        else {
            panic!("{err:?}")
        };
        assert!(reason.contains("ghost"), "{reason}");
        assert_eq!(*line, 2);
        assert_eq!(*column, 23);
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_graph("{\"nodes\":[\n{\"id\":}]}").unwrap_err();
        let GraphError::Parse { line, .. } = err else {
            panic!()
        };
        assert_eq!(line, 2);
        let err =
            parse_graph(r#"{"nodes":[{"id":"Bad","kind":"region","class":"x","x":0,"y":0}]}"#)
                .unwrap_err();
        assert!(err.to_string().contains("Bad"));
    }
}

//! Concrete and abstract scene graphs.
//!
//! A [`ConcreteSceneGraph`] is one snapshot of a traffic scene: typed objects
//! with attribute values, labelled directed edges between them and a
//! designated ego vehicle. An [`AbstractSceneGraph`] is a property: a pattern
//! graph over object classes plus a conjunctive list of predicates. Both are
//! validated against an [`ObjectModel`] on construction and immutable after.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asg_dsl::Predicate;
use crate::object_model::{BaseType, ModelError, ObjectModel, EGO_CLASS};

/// Relationship name that may never form a self-loop.
pub const IN_FRONT_OF: &str = "inFrontOf";

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Real(f64),
    Int(i64),
    Bool(bool),
    Str(String),
    Vec2([f64; 2]),
}

impl Value {
    pub fn base_type(&self) -> BaseType {
        match self {
            Value::Real(_) => BaseType::Real,
            Value::Int(_) => BaseType::Int,
            Value::Bool(_) => BaseType::Bool,
            Value::Str(_) => BaseType::String,
            Value::Vec2(_) => BaseType::Vec2,
        }
    }

    /// Numeric view used for mixed Int/Real comparisons.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Real(v) => Some(*v),
            Value::Int(v) => Some(*v as f64),
            _ => None,
        }
    }

    fn from_json(json: &serde_json::Value, ty: BaseType) -> Option<Value> {
        let finite = |v: f64| v.is_finite().then_some(v);
        match ty {
            BaseType::Real => json.as_f64().and_then(finite).map(Value::Real),
            BaseType::Int => json.as_i64().map(Value::Int),
            BaseType::Bool => json.as_bool().map(Value::Bool),
            BaseType::String => json.as_str().map(|s| Value::Str(s.to_string())),
            BaseType::Vec2 => match json.as_array().map(Vec::as_slice) {
                Some([x, y]) => Some(Value::Vec2([
                    x.as_f64().and_then(finite)?,
                    y.as_f64().and_then(finite)?,
                ])),
                _ => None,
            },
        }
    }

    fn to_json(&self) -> serde_json::Value {
        match self {
            Value::Real(v) => serde_json::json!(v),
            Value::Int(v) => serde_json::json!(v),
            Value::Bool(v) => serde_json::json!(v),
            Value::Str(v) => serde_json::json!(v),
            Value::Vec2([x, y]) => serde_json::json!([x, y]),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Real(v) => write!(f, "{v}"),
            Value::Int(v) => write!(f, "{v}"),
            Value::Bool(v) => write!(f, "{v}"),
            Value::Str(v) => write!(f, "{v:?}"),
            Value::Vec2([x, y]) => write!(f, "({x}, {y})"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("malformed scene record: {0}")]
    Malformed(String),
    #[error("invalid timestamp {0}")]
    Timestamp(f64),
    #[error("node `{node}`: {message}")]
    Node { node: String, message: String },
    #[error("edge ({src}, {rel}, {dst}): {message}")]
    Edge {
        src: String,
        rel: String,
        dst: String,
        message: String,
    },
    #[error("ego `{0}` is not a node of the scene")]
    MissingEgo(String),
    #[error("ego `{id}` has class `{class}`, which is not a {EGO_CLASS}")]
    EgoClass { id: String, class: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub class: String,
    pub attributes: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub src: String,
    pub rel: String,
    pub dst: String,
}

impl Edge {
    pub fn new(src: impl Into<String>, rel: impl Into<String>, dst: impl Into<String>) -> Self {
        Edge {
            src: src.into(),
            rel: rel.into(),
            dst: dst.into(),
        }
    }
}

/// A validated traffic scene snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcreteSceneGraph {
    timestamp: f64,
    ego: String,
    nodes: BTreeMap<String, SceneObject>,
    edges: BTreeSet<Edge>,
}

impl ConcreteSceneGraph {
    pub fn builder(timestamp: f64, ego: impl Into<String>) -> SceneBuilder {
        SceneBuilder {
            timestamp,
            ego: ego.into(),
            nodes: Vec::new(),
            edges: Vec::new(),
        }
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    pub fn ego(&self) -> &str {
        &self.ego
    }

    /// Objects keyed by id, in lexicographic id order.
    pub fn nodes(&self) -> &BTreeMap<String, SceneObject> {
        &self.nodes
    }

    pub fn node(&self, id: &str) -> Option<&SceneObject> {
        self.nodes.get(id)
    }

    pub fn edges(&self) -> &BTreeSet<Edge> {
        &self.edges
    }

    pub fn has_edge(&self, src: &str, rel: &str, dst: &str) -> bool {
        self.edges.contains(&Edge::new(src, rel, dst))
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Parses one scene record (a single JSON object) and validates it.
    pub fn from_json(record: &str, om: &ObjectModel) -> Result<Self, SceneError> {
        let raw: RawScene =
            serde_json::from_str(record).map_err(|e| SceneError::Malformed(e.to_string()))?;
        let mut builder = ConcreteSceneGraph::builder(raw.t, raw.ego);
        let mut seen = BTreeSet::new();
        for node in raw.nodes {
            if !seen.insert(node.id.clone()) {
                return Err(SceneError::Node {
                    node: node.id,
                    message: "duplicate node id".into(),
                });
            }
            if !om.has_class(&node.class) {
                return Err(SceneError::Node {
                    node: node.id,
                    message: format!("unknown class `{}`", node.class),
                });
            }
            let mut attrs = BTreeMap::new();
            for (name, json) in node.attrs {
                let ty = om
                    .attribute_type(&node.class, &name)
                    .ok_or_else(|| SceneError::Node {
                        node: node.id.clone(),
                        message: format!("class `{}` has no attribute `{name}`", node.class),
                    })?;
                let value = Value::from_json(&json, ty).ok_or_else(|| SceneError::Node {
                    node: node.id.clone(),
                    message: format!("attribute `{name}` expects {ty}, got {json}"),
                })?;
                attrs.insert(name, value);
            }
            builder.nodes.push((node.id, node.class, attrs));
        }
        for e in raw.edges {
            builder.edges.push(Edge::new(e.src, e.rel, e.dst));
        }
        builder.build(om)
    }

    /// Single-line JSON record in the scene stream format.
    pub fn to_json(&self) -> String {
        let raw = RawScene {
            t: self.timestamp,
            ego: self.ego.clone(),
            nodes: self
                .nodes
                .iter()
                .map(|(id, obj)| RawNode {
                    id: id.clone(),
                    class: obj.class.clone(),
                    attrs: obj
                        .attributes
                        .iter()
                        .map(|(k, v)| (k.clone(), v.to_json()))
                        .collect(),
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| RawEdge {
                    src: e.src.clone(),
                    rel: e.rel.clone(),
                    dst: e.dst.clone(),
                })
                .collect(),
        };
        serde_json::to_string(&raw).expect("scene serializes")
    }

    /// Same scene with a different timestamp.
    pub fn with_timestamp(&self, timestamp: f64) -> Self {
        ConcreteSceneGraph {
            timestamp,
            ..self.clone()
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScene {
    t: f64,
    ego: String,
    nodes: Vec<RawNode>,
    #[serde(default)]
    edges: Vec<RawEdge>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: String,
    class: String,
    #[serde(default)]
    attrs: serde_json::Map<String, serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEdge {
    src: String,
    rel: String,
    dst: String,
}

/// Incremental construction of a [`ConcreteSceneGraph`]; all checks happen in
/// [`SceneBuilder::build`].
#[derive(Debug, Clone)]
pub struct SceneBuilder {
    timestamp: f64,
    ego: String,
    nodes: Vec<(String, String, BTreeMap<String, Value>)>,
    edges: Vec<Edge>,
}

impl SceneBuilder {
    pub fn node(&mut self, id: impl Into<String>, class: impl Into<String>) -> &mut Self {
        self.nodes.push((id.into(), class.into(), BTreeMap::new()));
        self
    }

    /// Sets an attribute on the most recently added node with this id.
    pub fn attr(&mut self, id: &str, name: impl Into<String>, value: Value) -> &mut Self {
        if let Some(node) = self.nodes.iter_mut().rev().find(|n| n.0 == id) {
            node.2.insert(name.into(), value);
        }
        self
    }

    pub fn edge(
        &mut self,
        src: impl Into<String>,
        rel: impl Into<String>,
        dst: impl Into<String>,
    ) -> &mut Self {
        self.edges.push(Edge::new(src, rel, dst));
        self
    }

    pub fn build(&self, om: &ObjectModel) -> Result<ConcreteSceneGraph, SceneError> {
        if !self.timestamp.is_finite() {
            return Err(SceneError::Timestamp(self.timestamp));
        }
        let mut nodes = BTreeMap::new();
        for (id, class, attrs) in &self.nodes {
            let node_err = |message: String| SceneError::Node {
                node: id.clone(),
                message,
            };
            if !om.has_class(class) {
                return Err(node_err(format!("unknown class `{class}`")));
            }
            for (name, value) in attrs {
                match om.attribute_type(class, name) {
                    None => {
                        return Err(node_err(format!(
                            "class `{class}` has no attribute `{name}`"
                        )))
                    }
                    Some(ty) if ty != value.base_type() => {
                        return Err(node_err(format!(
                            "attribute `{name}` expects {ty}, got {}",
                            value.base_type()
                        )))
                    }
                    Some(_) => {}
                }
            }
            let obj = SceneObject {
                class: class.clone(),
                attributes: attrs.clone(),
            };
            if nodes.insert(id.clone(), obj).is_some() {
                return Err(node_err("duplicate node id".into()));
            }
        }

        let ego = nodes
            .get(&self.ego)
            .ok_or_else(|| SceneError::MissingEgo(self.ego.clone()))?;
        if !om.is_subclass(&ego.class, EGO_CLASS) {
            return Err(SceneError::EgoClass {
                id: self.ego.clone(),
                class: ego.class.clone(),
            });
        }

        let mut edges = BTreeSet::new();
        for e in &self.edges {
            let edge_err = |message: String| SceneError::Edge {
                src: e.src.clone(),
                rel: e.rel.clone(),
                dst: e.dst.clone(),
                message,
            };
            let (Some(src), Some(dst)) = (nodes.get(&e.src), nodes.get(&e.dst)) else {
                return Err(edge_err("endpoint is not a node of the scene".into()));
            };
            match om.is_relationship_allowed(&e.rel, &src.class, &dst.class) {
                Ok(true) => {}
                Ok(false) => {
                    return Err(edge_err(format!(
                        "`{}` is not allowed from {} to {}",
                        e.rel, src.class, dst.class
                    )))
                }
                Err(ModelError::UnknownName { kind, name }) => {
                    return Err(edge_err(format!("unknown {kind} `{name}`")))
                }
                Err(other) => return Err(edge_err(other.to_string())),
            }
            if e.rel == IN_FRONT_OF && e.src == e.dst {
                return Err(edge_err("an object cannot be in front of itself".into()));
            }
            edges.insert(e.clone());
        }

        Ok(ConcreteSceneGraph {
            timestamp: self.timestamp,
            ego: self.ego.clone(),
            nodes,
            edges,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PatternEdge {
    pub src: String,
    pub rel: String,
    pub dst: String,
}

/// A spatial property: pattern graph, ego anchor and conjunctive predicates.
///
/// Built by [`crate::asg_dsl::parse_asg`] or [`crate::asg_dsl::AsgBuilder`],
/// which enforce the structural and typing invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct AbstractSceneGraph {
    pub(crate) name: String,
    pub(crate) nodes: IndexMap<String, String>,
    pub(crate) edges: Vec<PatternEdge>,
    pub(crate) ego: String,
    pub(crate) predicates: Vec<Predicate>,
}

impl AbstractSceneGraph {
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Pattern node ids mapped to their classes, in declaration order.
    pub fn nodes(&self) -> &IndexMap<String, String> {
        &self.nodes
    }

    pub fn edges(&self) -> &[PatternEdge] {
        &self.edges
    }

    pub fn ego(&self) -> &str {
        &self.ego
    }

    pub fn predicates(&self) -> &[Predicate] {
        &self.predicates
    }

    pub fn class_of(&self, id: &str) -> Option<&str> {
        self.nodes.get(id).map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn om() -> &'static ObjectModel {
        ObjectModel::bundled()
    }

    const OBSTACLE_SCENE: &str = r#"{"t": 0.5, "ego": "ego",
        "nodes": [
            {"id": "ego", "class": "Vehicle", "attrs": {"velocity": 3.0, "position": [0, 0]}},
            {"id": "obs", "class": "Static", "attrs": {"velocity": 0, "position": [10, 0]}},
            {"id": "l1", "class": "Lane"}
        ],
        "edges": [
            {"src": "ego", "rel": "isIn", "dst": "l1"},
            {"src": "obs", "rel": "isIn", "dst": "l1"},
            {"src": "obs", "rel": "inFrontOf", "dst": "ego"}
        ]}"#;

    #[test]
    fn parses_obstacle_scene() {
        let g = ConcreteSceneGraph::from_json(OBSTACLE_SCENE, om()).unwrap();
        assert_eq!(g.timestamp(), 0.5);
        assert_eq!(g.ego(), "ego");
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edges().len(), 3);
        assert!(g.has_edge("obs", "inFrontOf", "ego"));
        assert_eq!(
            g.node("obs").unwrap().attributes["position"],
            Value::Vec2([10.0, 0.0])
        );
        // Integer JSON is accepted for Real attributes.
        assert_eq!(
            g.node("obs").unwrap().attributes["velocity"],
            Value::Real(0.0)
        );
    }

    #[test]
    fn single_node_scene() {
        let g = ConcreteSceneGraph::from_json(
            r#"{"t": 0, "ego": "ego", "nodes": [{"id": "ego", "class": "Vehicle"}], "edges": []}"#,
            om(),
        )
        .unwrap();
        assert_eq!(g.node_count(), 1);
        assert!(g.edges().is_empty());
    }

    #[test]
    fn lane_cannot_be_in_vehicle() {
        let err = ConcreteSceneGraph::builder(0.0, "ego")
            .node("ego", "Vehicle")
            .node("l1", "Lane")
            .edge("l1", "isIn", "ego")
            .build(om())
            .unwrap_err();
        assert!(
            matches!(err, SceneError::Edge { ref src, .. } if src == "l1"),
            "{err}"
        );
    }

    #[test]
    fn validation_failures() {
        let base = || {
            let mut b = ConcreteSceneGraph::builder(0.0, "ego");
            b.node("ego", "Vehicle").node("l1", "Lane");
            b
        };
        assert!(matches!(
            ConcreteSceneGraph::builder(0.0, "ego")
                .node("car", "Vehicle")
                .build(om()),
            Err(SceneError::MissingEgo(_))
        ));
        assert!(matches!(
            ConcreteSceneGraph::builder(0.0, "ego")
                .node("ego", "Static")
                .build(om()),
            Err(SceneError::EgoClass { .. })
        ));
        assert!(matches!(
            base().node("b", "Boat").build(om()),
            Err(SceneError::Node { .. })
        ));
        assert!(matches!(
            base().attr("l1", "velocity", Value::Real(1.0)).build(om()),
            Err(SceneError::Node { .. })
        ));
        assert!(matches!(
            base().attr("ego", "velocity", Value::Int(1)).build(om()),
            Err(SceneError::Node { .. })
        ));
        assert!(matches!(
            base().edge("ego", "inFrontOf", "ego").build(om()),
            Err(SceneError::Edge { .. })
        ));
        assert!(matches!(
            base().edge("ego", "isIn", "nowhere").build(om()),
            Err(SceneError::Edge { .. })
        ));
        assert!(matches!(
            base().edge("ego", "touches", "l1").build(om()),
            Err(SceneError::Edge { .. })
        ));
        assert!(matches!(
            base().node("ego", "Vehicle").build(om()),
            Err(SceneError::Node { .. })
        ));
        assert!(matches!(
            ConcreteSceneGraph::builder(f64::NAN, "ego")
                .node("ego", "Vehicle")
                .build(om()),
            Err(SceneError::Timestamp(_))
        ));
    }

    #[test]
    fn malformed_records() {
        for bad in [
            "",
            "{",
            r#"{"t": 0, "nodes": []}"#,
            r#"{"t": 0, "ego": "e", "nodes": [], "extra": 1}"#,
            r#"{"t": 0, "ego": "ego", "nodes": [{"id": "ego", "class": "Vehicle", "attrs": {"position": [1]}}]}"#,
            r#"{"t": 0, "ego": "ego", "nodes": [{"id": "ego", "class": "Vehicle"}, {"id": "ego", "class": "Vehicle"}]}"#,
        ] {
            assert!(ConcreteSceneGraph::from_json(bad, om()).is_err(), "{bad}");
        }
    }

    #[test]
    fn json_round_trip() {
        let g = ConcreteSceneGraph::from_json(OBSTACLE_SCENE, om()).unwrap();
        let line = g.to_json();
        assert!(!line.contains('\n'));
        let again = ConcreteSceneGraph::from_json(&line, om()).unwrap();
        assert_eq!(g, again);
        assert_eq!(line, again.to_json());
    }
}

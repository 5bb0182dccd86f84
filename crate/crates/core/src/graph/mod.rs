//! In-memory typed knowledge graph holding the scene context.
//!
//! Three node kinds (entity, relation, attribute) and two edge kinds (`role`
//! and `owns`). Relations connect their role players through `role` edges;
//! attributes hang off entities and relations through `owns` edges.

mod ontology;
mod pattern;

use std::collections::HashMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ontology::{EntityType, Ontology, RelationType, ValueKind};
pub use pattern::{Binding, Cmp, Conjunct, Pattern};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Entity,
    Relation,
    Attribute,
}

/// Typed scalar carried by attribute nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Real(f64),
    Str(String),
}

impl Value {
    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Str(_) => ValueKind::Str,
            Value::Real(_) => ValueKind::Real,
            Value::Bool(_) => ValueKind::Bool,
            Value::Int(_) => ValueKind::Int,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Real(v) => Some(v),
            Value::Int(v) => Some(v as f64),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match *self {
            Value::Int(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match *self {
            Value::Bool(b) => Some(b),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Str(s) => write!(f, "{s:?}"),
            Value::Real(v) => write!(f, "{v}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
        }
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Str(s.to_owned())
    }
}
impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Str(s)
    }
}
impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Real(v)
    }
}
impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}
impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphNode {
    pub id: NodeId,
    pub kind: NodeKind,
    /// Entity type, relation type, or attribute name.
    pub type_name: &'static str,
    pub value: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EdgeLabel {
    Role(&'static str),
    Owns,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphEdge {
    pub from: NodeId,
    pub to: NodeId,
    pub label: EdgeLabel,
}

/// Attributes attached to a relation, as returned by relation queries.
pub type Attributes = Vec<(&'static str, Value)>;

#[derive(Debug, Clone)]
pub struct SceneGraph {
    ontology: &'static Ontology,
    nodes: Vec<GraphNode>,
    edges: Vec<GraphEdge>,
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
    by_type: HashMap<&'static str, Vec<NodeId>>,
    generation: u64,
}

impl Default for SceneGraph {
    fn default() -> Self {
        Self::new()
    }
}

impl SceneGraph {
    pub fn new() -> Self {
        Self {
            ontology: Ontology::traffic(),
            nodes: Vec::new(),
            edges: Vec::new(),
            out_edges: Vec::new(),
            in_edges: Vec::new(),
            by_type: HashMap::new(),
            generation: 0,
        }
    }

    pub fn ontology(&self) -> &'static Ontology {
        self.ontology
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[GraphEdge] {
        &self.edges
    }

    pub fn node(&self, id: NodeId) -> Option<&GraphNode> {
        self.nodes.get(id.0 as usize)
    }

    pub fn add_entity<N, V>(&mut self, type_name: &str, attributes: impl IntoIterator<Item = (N, V)>) -> Result<NodeId>
    where
        N: AsRef<str>,
        V: Into<Value>,
    {
        let ty = self
            .ontology
            .entity(type_name)
            .ok_or_else(|| Error::Ontology(format!("unknown entity type `{type_name}`")))?;
        let attrs = self.check_attributes(attributes)?;
        let id = self.push_node(NodeKind::Entity, ty.name, None);
        for (name, value) in attrs {
            let a = self.push_node(NodeKind::Attribute, name, Some(value));
            self.push_edge(id, a, EdgeLabel::Owns);
        }
        self.generation += 1;
        Ok(id)
    }

    pub fn add_relation<R, N, V>(
        &mut self,
        relation_type: &str,
        roles: impl IntoIterator<Item = (R, NodeId)>,
        attributes: impl IntoIterator<Item = (N, V)>,
    ) -> Result<NodeId>
    where
        R: AsRef<str>,
        N: AsRef<str>,
        V: Into<Value>,
    {
        let rel = self
            .ontology
            .relation(relation_type)
            .ok_or_else(|| Error::Ontology(format!("unknown relation type `{relation_type}`")))?;
        let mut players = Vec::new();
        for (role, target) in roles {
            let role = role.as_ref();
            let role = rel.roles.iter().find(|r| **r == role).ok_or_else(|| {
                Error::Ontology(format!("relation `{}` has no role `{role}`", rel.name))
            })?;
            match self.node(target) {
                Some(n) if n.kind != NodeKind::Attribute => players.push((*role, target)),
                Some(_) => {
                    return Err(Error::GraphIntegrity(format!(
                        "role `{role}` cannot point at attribute node {target}"
                    )))
                }
                None => {
                    return Err(Error::GraphIntegrity(format!(
                        "role `{role}` target {target} does not exist"
                    )))
                }
            }
        }
        let attrs = self.check_attributes(attributes)?;
        let id = self.push_node(NodeKind::Relation, rel.name, None);
        for (role, target) in players {
            self.push_edge(id, target, EdgeLabel::Role(role));
        }
        for (name, value) in attrs {
            let a = self.push_node(NodeKind::Attribute, name, Some(value));
            self.push_edge(id, a, EdgeLabel::Owns);
        }
        self.generation += 1;
        Ok(id)
    }

    fn check_attributes<N, V>(
        &self,
        attributes: impl IntoIterator<Item = (N, V)>,
    ) -> Result<Vec<(&'static str, Value)>>
    where
        N: AsRef<str>,
        V: Into<Value>,
    {
        attributes
            .into_iter()
            .map(|(name, value)| {
                let name = name.as_ref();
                let value = value.into();
                let (name, kind) = self
                    .ontology
                    .attribute(name)
                    .ok_or_else(|| Error::Ontology(format!("unknown attribute `{name}`")))?;
                let value = match (kind, value) {
                    (ValueKind::Real, Value::Int(i)) => Value::Real(i as f64),
                    (k, v) if k == v.kind() => v,
                    (k, v) => {
                        return Err(Error::Ontology(format!(
                            "attribute `{name}` expects {k:?}, got {v}"
                        )))
                    }
                };
                Ok((name, value))
            })
            .collect()
    }

    fn push_node(&mut self, kind: NodeKind, type_name: &'static str, value: Option<Value>) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(GraphNode {
            id,
            kind,
            type_name,
            value,
        });
        self.out_edges.push(Vec::new());
        self.in_edges.push(Vec::new());
        if kind != NodeKind::Attribute {
            self.by_type.entry(type_name).or_default().push(id);
        }
        id
    }

    fn push_edge(&mut self, from: NodeId, to: NodeId, label: EdgeLabel) {
        let idx = self.edges.len();
        self.edges.push(GraphEdge { from, to, label });
        self.out_edges[from.0 as usize].push(idx);
        self.in_edges[to.0 as usize].push(idx);
    }

    /// All attribute `(name, value)` pairs owned by a node, in insertion order.
    pub fn attributes(&self, id: NodeId) -> impl Iterator<Item = (&'static str, &Value)> + '_ {
        self.out_edges
            .get(id.0 as usize)
            .into_iter()
            .flatten()
            .filter_map(move |&e| {
                let edge = &self.edges[e];
                if edge.label != EdgeLabel::Owns {
                    return None;
                }
                let n = &self.nodes[edge.to.0 as usize];
                n.value.as_ref().map(|v| (n.type_name, v))
            })
    }

    pub fn attribute(&self, id: NodeId, name: &str) -> Option<&Value> {
        self.attributes(id).find(|(n, _)| *n == name).map(|(_, v)| v)
    }

    /// `(role, player)` pairs of a relation node.
    pub fn role_players(&self, relation: NodeId) -> impl Iterator<Item = (&'static str, NodeId)> + '_ {
        self.out_edges
            .get(relation.0 as usize)
            .into_iter()
            .flatten()
            .filter_map(move |&e| match self.edges[e].label {
                EdgeLabel::Role(r) => Some((r, self.edges[e].to)),
                EdgeLabel::Owns => None,
            })
    }

    /// Relations of `relation_type` in which `anchor` plays some role.
    pub fn relations_of<'a>(&'a self, anchor: NodeId, relation_type: &'a str) -> impl Iterator<Item = NodeId> + 'a {
        let mut seen = Vec::new();
        self.in_edges
            .get(anchor.0 as usize)
            .into_iter()
            .flatten()
            .filter_map(move |&e| {
                let edge = &self.edges[e];
                let rel = &self.nodes[edge.from.0 as usize];
                if matches!(edge.label, EdgeLabel::Role(_))
                    && rel.type_name == relation_type
                    && !seen.contains(&rel.id)
                {
                    seen.push(rel.id);
                    Some(rel.id)
                } else {
                    None
                }
            })
    }

    /// Entity nodes whose type is `type_name` or one of its subtypes.
    pub fn entities_of(&self, type_name: &str) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = self
            .ontology
            .entity_types()
            .iter()
            .filter(|t| self.ontology.is_subtype(t.name, type_name))
            .flat_map(|t| self.by_type.get(t.name).into_iter().flatten().copied())
            .collect();
        out.sort_unstable();
        out
    }

    /// Relation nodes of a given type, ascending id.
    pub fn relations_by_type(&self, relation_type: &str) -> &[NodeId] {
        self.by_type
            .get(relation_type)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn match_pattern(&self, pattern: &Pattern) -> Result<Vec<Binding>> {
        pattern::run(self, pattern)
    }

    /// Among relations of `relation_type` anchored at `anchor`, the one with
    /// the highest `priority` attribute. Equal-priority conflicts resolve to
    /// the more severe conclusion (acceptability 0 over 1, higher risk level).
    pub fn highest_priority_relation(
        &self,
        relation_type: &str,
        anchor: NodeId,
    ) -> Result<Option<(NodeId, Attributes)>> {
        if self.node(anchor).is_none() {
            return Err(Error::GraphIntegrity(format!("anchor {anchor} does not exist")));
        }
        let mut best: Option<(NodeId, Attributes, (i64, i64, String))> = None;
        for rel in self.relations_of(anchor, relation_type) {
            let attrs: Attributes = self.attributes(rel).map(|(n, v)| (n, v.clone())).collect();
            let key = resolution_key(&attrs);
            let better = match &best {
                None => true,
                Some((_, _, k)) => key > *k,
            };
            if better {
                best = Some((rel, attrs, key));
            }
        }
        Ok(best.map(|(id, attrs, _)| (id, attrs)))
    }

    /// Checks edge endpoints, the attribute-value constraint and that every
    /// attribute is owned by something.
    pub fn check_integrity(&self) -> Result<()> {
        let n = self.nodes.len() as u32;
        for e in &self.edges {
            if e.from.0 >= n || e.to.0 >= n {
                return Err(Error::GraphIntegrity(format!("dangling edge {:?}", e)));
            }
            let to = &self.nodes[e.to.0 as usize];
            let from = &self.nodes[e.from.0 as usize];
            match e.label {
                EdgeLabel::Owns if to.kind != NodeKind::Attribute => {
                    return Err(Error::GraphIntegrity(format!("owns edge into non-attribute {}", to.id)))
                }
                EdgeLabel::Role(_) if from.kind != NodeKind::Relation || to.kind == NodeKind::Attribute => {
                    return Err(Error::GraphIntegrity(format!("bad role edge {} -> {}", from.id, to.id)))
                }
                _ => {}
            }
        }
        for node in &self.nodes {
            if (node.kind == NodeKind::Attribute) != node.value.is_some() {
                return Err(Error::GraphIntegrity(format!("value constraint violated at {}", node.id)));
            }
            if node.kind == NodeKind::Attribute && self.in_edges[node.id.0 as usize].is_empty() {
                return Err(Error::GraphIntegrity(format!("dangling attribute {}", node.id)));
            }
        }
        Ok(())
    }

    /// Structured-text dump: node list followed by edge list.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "generation {}", self.generation);
        let _ = writeln!(s, "nodes {}", self.nodes.len());
        for n in &self.nodes {
            let kind = match n.kind {
                NodeKind::Entity => "entity",
                NodeKind::Relation => "relation",
                NodeKind::Attribute => "attribute",
            };
            match &n.value {
                Some(v) => {
                    let _ = writeln!(s, "  {}\t{kind}\t{}\t{v}", n.id, n.type_name);
                }
                None => {
                    let _ = writeln!(s, "  {}\t{kind}\t{}", n.id, n.type_name);
                }
            }
        }
        let _ = writeln!(s, "edges {}", self.edges.len());
        for e in &self.edges {
            let label = match e.label {
                EdgeLabel::Role(r) => format!("role:{r}"),
                EdgeLabel::Owns => "owns".to_owned(),
            };
            let _ = writeln!(s, "  {}\t{}\t{label}", e.from, e.to);
        }
        s
    }
}

/// Conclusion severity used to break equal-priority ties.
fn severity(attrs: &Attributes) -> i64 {
    for (name, v) in attrs {
        match (*name, v) {
            ("acceptability", Value::Int(a)) => return 1 - a,
            ("risk_level", Value::Str(s)) => {
                return match s.as_str() {
                    "low" => 0,
                    "medium" => 1,
                    "high" => 2,
                    _ => 0,
                }
            }
            _ => {}
        }
    }
    0
}

fn resolution_key(attrs: &Attributes) -> (i64, i64, String) {
    let priority = attrs
        .iter()
        .find(|(n, _)| *n == "priority")
        .and_then(|(_, v)| v.as_i64())
        .unwrap_or(i64::MIN);
    // canonical text keeps the pick independent of insertion order
    let mut canon: Vec<String> = attrs.iter().map(|(n, v)| format!("{n}={v}")).collect();
    canon.sort();
    (priority, severity(attrs), canon.join(","))
}

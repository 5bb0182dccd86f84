//! Prioritized default rules that insert `crossing_acceptability` and
//! `has_risk_level` relations into the scene graph.
//!
//! Rules are applied forward to a fixpoint, lowest priority first. Conflicting
//! conclusions are not removed; readers resolve them by taking the relation
//! with the highest priority (see [`SceneGraph::highest_priority_relation`]).

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Binding, Cmp, NodeId, Pattern, SceneGraph, Value};

/// Sweeps allowed before apply_rules gives up on reaching a fixpoint.
pub const MAX_SWEEPS: usize = 100;

pub const CROSSING_ACCEPTABILITY: &str = "crossing_acceptability";
pub const HAS_RISK_LEVEL: &str = "has_risk_level";

/// Relation insertion template; role values are body variable names.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationTemplate {
    pub relation: String,
    pub roles: Vec<(String, String)>,
    pub attributes: Vec<(String, Value)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub name: String,
    pub priority: i64,
    pub body: Pattern,
    pub head: RelationTemplate,
}

impl Rule {
    fn head_priority(&self) -> Option<i64> {
        self.head
            .attributes
            .iter()
            .find(|(n, _)| n == "priority")
            .and_then(|(_, v)| v.as_i64())
    }
}

#[derive(Debug, Clone)]
pub struct RuleSet {
    rules: Vec<Rule>,
}

impl RuleSet {
    pub fn new(rules: Vec<Rule>) -> Result<Self> {
        let mut names = HashSet::new();
        for r in &rules {
            if !names.insert(r.name.as_str()) {
                return Err(Error::Pattern(format!("duplicate rule name `{}`", r.name)));
            }
            if r.priority < 0 {
                return Err(Error::Pattern(format!("rule `{}` has negative priority", r.name)));
            }
            if r.head_priority() != Some(r.priority) {
                return Err(Error::Pattern(format!(
                    "rule `{}`: head priority must equal rule priority",
                    r.name
                )));
            }
            let bound = r.body.bound_vars();
            for (_, var) in &r.head.roles {
                if !bound.contains(var) {
                    return Err(Error::Pattern(format!(
                        "rule `{}`: head variable `{var}` not bound by the body",
                        r.name
                    )));
                }
            }
        }
        Ok(Self { rules })
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn get(&self, name: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.name == name)
    }

    /// The compiled-in traffic rules: six crossing-acceptability rules and
    /// four object risk-level rules.
    pub fn traffic() -> Self {
        let dashed = || {
            Pattern::new()
                .isa("x", "lane_marking")
                .has("x", "lane_marking_type", Cmp::Eq, "dashed")
                .isa("e", "ego")
        };
        let dashed_left = || {
            dashed()
                .rel(None, "is_on", &[("physical", "e"), ("road", "l")])
                .isa("l", "lane")
                .rel(Some("b"), "bounds", &[("lane_marking", "x"), ("road", "l")])
                .has("b", "side", Cmp::Eq, "left")
        };
        let crossing = |name: &str, priority: i64, acceptability: i64, body: Pattern| Rule {
            name: name.into(),
            priority,
            body,
            head: RelationTemplate {
                relation: CROSSING_ACCEPTABILITY.into(),
                roles: vec![("lane_marking".into(), "x".into()), ("ego".into(), "e".into())],
                attributes: vec![
                    ("acceptability".into(), Value::Int(acceptability)),
                    ("priority".into(), Value::Int(priority)),
                ],
            },
        };
        let risk = |name: &str, priority: i64, level: RiskLevel, body: Pattern| Rule {
            name: name.into(),
            priority,
            body: body.isa("e", "ego"),
            head: RelationTemplate {
                relation: HAS_RISK_LEVEL.into(),
                roles: vec![("object".into(), "o".into()), ("ego".into(), "e".into())],
                attributes: vec![
                    ("risk_level".into(), Value::from(level.as_str())),
                    ("priority".into(), Value::Int(priority)),
                ],
            },
        };

        let rules = vec![
            crossing("dashed_acceptable", 0, 1, dashed()),
            crossing(
                "solid_not_acceptable",
                0,
                0,
                Pattern::new()
                    .isa("x", "lane_marking")
                    .has("x", "lane_marking_type", Cmp::Eq, "solid")
                    .isa("e", "ego"),
            ),
            crossing("dashed_left_not_acceptable", 1, 0, dashed_left()),
            crossing(
                "dashed_left_object_ahead",
                2,
                1,
                dashed_left()
                    .isa("o", "object")
                    .rel(None, "is_on", &[("physical", "o"), ("road", "l")])
                    .rel(Some("rp"), "relative_position", &[("object", "o"), ("ego", "e")])
                    .has("rp", "longitudinal", Cmp::Gt, 0.0)
                    .has("rp", "distance", Cmp::Lt, 20.0),
            ),
            crossing(
                "dashed_left_oncoming_vehicle",
                3,
                0,
                dashed_left()
                    .isa("l2", "lane")
                    .rel(Some("b2"), "bounds", &[("lane_marking", "x"), ("road", "l2")])
                    .has("b2", "side", Cmp::Eq, "right")
                    .isa("o", "vehicle")
                    .rel(None, "is_on", &[("physical", "o"), ("road", "l2")])
                    .rel(Some("rp"), "relative_position", &[("object", "o"), ("ego", "e")])
                    .has("rp", "oncoming", Cmp::Eq, true)
                    .has("rp", "distance", Cmp::Lt, 50.0),
            ),
            crossing(
                "dashed_vru_crossing",
                4,
                0,
                dashed()
                    .isa("p", "vru")
                    .has("p", "crossing_road", Cmp::Eq, true),
            ),
            risk("object_medium", 0, RiskLevel::Medium, Pattern::new().isa("o", "object")),
            risk(
                "small_artificial_object_low",
                1,
                RiskLevel::Low,
                Pattern::new()
                    .isa("o", "artificial_object")
                    .has("o", "classification_certainty", Cmp::Gt, 0.8)
                    .has("o", "length", Cmp::Lt, 0.4)
                    .has("o", "width", Cmp::Lt, 0.4)
                    .has("o", "height", Cmp::Lt, 0.4),
            ),
            risk(
                "vru_on_collision_course_high",
                2,
                RiskLevel::High,
                Pattern::new()
                    .isa("o", "vru")
                    .has("o", "classification_certainty", Cmp::Gt, 0.05)
                    .has("o", "collision_probability", Cmp::Gt, 0.05),
            ),
            risk(
                "collision_probable_high",
                3,
                RiskLevel::High,
                Pattern::new()
                    .isa("o", "object")
                    .has("o", "collision_probability", Cmp::Gt, 0.2),
            ),
        ];
        Self::new(rules).expect("built-in rule set is well formed")
    }
}

type Signature = (String, Vec<(String, NodeId)>, Vec<String>);

fn signature(relation: &str, roles: &[(String, NodeId)], attrs: &[(String, Value)]) -> Signature {
    let mut roles = roles.to_vec();
    roles.sort();
    let mut attrs: Vec<String> = attrs.iter().map(|(n, v)| format!("{n}={v}")).collect();
    attrs.sort();
    (relation.to_owned(), roles, attrs)
}

fn existing_signatures(graph: &SceneGraph, rules: &RuleSet) -> HashSet<Signature> {
    let mut types: Vec<&str> = rules.rules.iter().map(|r| r.head.relation.as_str()).collect();
    types.sort_unstable();
    types.dedup();
    let mut out = HashSet::new();
    for t in types {
        for &rel in graph.relations_by_type(t) {
            let roles: Vec<(String, NodeId)> =
                graph.role_players(rel).map(|(r, n)| (r.to_owned(), n)).collect();
            let attrs: Vec<(String, Value)> =
                graph.attributes(rel).map(|(n, v)| (n.to_owned(), v.clone())).collect();
            out.insert(signature(t, &roles, &attrs));
        }
    }
    out
}

/// Forward-chains `rules` over `graph` until nothing new is inserted.
/// Returns the number of inserted relations; re-application returns 0.
pub fn apply_rules(graph: &mut SceneGraph, rules: &RuleSet) -> Result<usize> {
    graph.check_integrity()?;
    let mut order: Vec<&Rule> = rules.rules.iter().collect();
    order.sort_by_key(|r| r.priority);
    let mut seen = existing_signatures(graph, rules);
    let mut inserted = 0;
    for _sweep in 0..MAX_SWEEPS {
        let mut this_sweep = 0;
        for rule in &order {
            let bindings = graph.match_pattern(&rule.body)?;
            for b in bindings {
                if insert_head(graph, rule, &b, &mut seen)? {
                    this_sweep += 1;
                }
            }
        }
        inserted += this_sweep;
        if this_sweep == 0 {
            return Ok(inserted);
        }
    }
    Err(Error::Fixpoint { sweeps: MAX_SWEEPS })
}

fn insert_head(
    graph: &mut SceneGraph,
    rule: &Rule,
    binding: &Binding,
    seen: &mut HashSet<Signature>,
) -> Result<bool> {
    let roles: Vec<(String, NodeId)> = rule
        .head
        .roles
        .iter()
        .map(|(role, var)| (role.clone(), binding[var]))
        .collect();
    let sig = signature(&rule.head.relation, &roles, &rule.head.attributes);
    if seen.contains(&sig) {
        return Ok(false);
    }
    graph.add_relation(
        &rule.head.relation,
        roles.iter().map(|(r, n)| (r.as_str(), *n)),
        rule.head.attributes.iter().map(|(n, v)| (n.as_str(), v.clone())),
    )?;
    seen.insert(sig);
    Ok(true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskLevel {
    Low,
    Medium,
    High,
}

impl RiskLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            RiskLevel::Low => "low",
            RiskLevel::Medium => "medium",
            RiskLevel::High => "high",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "low" => Some(RiskLevel::Low),
            "medium" => Some(RiskLevel::Medium),
            "high" => Some(RiskLevel::High),
            _ => None,
        }
    }
}

impl fmt::Display for RiskLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Crossing {
    /// 1 when crossing the marking is acceptable, 0 otherwise.
    pub acceptability: u8,
    pub priority: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Risk {
    pub level: RiskLevel,
    pub priority: i64,
}

fn int_attr(attrs: &[(&str, Value)], name: &str) -> Option<i64> {
    attrs.iter().find(|(n, _)| *n == name).and_then(|(_, v)| v.as_i64())
}

/// Resolved crossing acceptability of a marking, `None` when no rule covered it.
pub fn crossing_acceptability(graph: &SceneGraph, marking: NodeId) -> Option<Crossing> {
    let (_, attrs) = graph
        .highest_priority_relation(CROSSING_ACCEPTABILITY, marking)
        .ok()??;
    Some(Crossing {
        acceptability: int_attr(&attrs, "acceptability")?.clamp(0, 1) as u8,
        priority: int_attr(&attrs, "priority")?,
    })
}

pub fn risk_level(graph: &SceneGraph, object: NodeId) -> Option<Risk> {
    let (_, attrs) = graph.highest_priority_relation(HAS_RISK_LEVEL, object).ok()??;
    let level = attrs
        .iter()
        .find(|(n, _)| *n == "risk_level")
        .and_then(|(_, v)| v.as_str())
        .and_then(RiskLevel::parse)?;
    Some(Risk {
        level,
        priority: int_attr(&attrs, "priority")?,
    })
}

/// One tab-separated line per marking and object: kind, node id, label, every
/// inserted conclusion as `value@priority`, and the resolved winner.
pub fn rule_trace(graph: &SceneGraph) -> Vec<String> {
    let mut lines = Vec::new();
    let label = |id: NodeId| {
        graph
            .attribute(id, "label")
            .and_then(Value::as_str)
            .unwrap_or("-")
            .to_owned()
    };
    let conclusions = |id: NodeId, relation: &str, key: &str| {
        let mut all: Vec<String> = graph
            .relations_of(id, relation)
            .map(|rel| {
                let v = graph.attribute(rel, key).map(|v| match v {
                    Value::Str(s) => s.clone(),
                    other => other.to_string(),
                });
                let p = graph.attribute(rel, "priority").and_then(Value::as_i64);
                format!("{}@{}", v.unwrap_or_default(), p.unwrap_or(-1))
            })
            .collect();
        all.sort();
        all.join(",")
    };
    for m in graph.entities_of("lane_marking") {
        let winner = crossing_acceptability(graph, m)
            .map(|c| format!("{}@{}", c.acceptability, c.priority))
            .unwrap_or_else(|| "none".into());
        lines.push(format!(
            "marking\t{m}\t{}\t{}\t{winner}",
            label(m),
            conclusions(m, CROSSING_ACCEPTABILITY, "acceptability")
        ));
    }
    for o in graph.entities_of("object") {
        let winner = risk_level(graph, o)
            .map(|r| format!("{}@{}", r.level, r.priority))
            .unwrap_or_else(|| "none".into());
        lines.push(format!(
            "object\t{o}\t{}\t{}\t{winner}",
            label(o),
            conclusions(o, HAS_RISK_LEVEL, "risk_level")
        ));
    }
    lines
}

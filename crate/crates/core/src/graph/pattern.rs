//! Conjunctive patterns over the scene graph (Horn-clause bodies).

use std::collections::{BTreeMap, BTreeSet};

use super::{NodeId, NodeKind, SceneGraph, Value};
use crate::error::{Error, Result};

/// Variable name → bound node.
pub type Binding = BTreeMap<String, NodeId>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Cmp {
    fn holds(self, lhs: &Value, rhs: &Value) -> bool {
        use std::cmp::Ordering;
        let ord = match (lhs, rhs) {
            (Value::Str(a), Value::Str(b)) => Some(a.cmp(b)),
            (Value::Bool(a), Value::Bool(b)) => Some(a.cmp(b)),
            _ => match (lhs.as_f64(), rhs.as_f64()) {
                (Some(a), Some(b)) => a.partial_cmp(&b),
                _ => None,
            },
        };
        match (self, ord) {
            (_, None) => false,
            (Cmp::Eq, Some(o)) => o == Ordering::Equal,
            (Cmp::Ne, Some(o)) => o != Ordering::Equal,
            (Cmp::Lt, Some(o)) => o == Ordering::Less,
            (Cmp::Le, Some(o)) => o != Ordering::Greater,
            (Cmp::Gt, Some(o)) => o == Ordering::Greater,
            (Cmp::Ge, Some(o)) => o != Ordering::Less,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Conjunct {
    /// `var` is an entity of `type_name` or a subtype.
    Isa { var: String, type_name: String },
    /// `var` owns an attribute `name` whose value satisfies `cmp value`.
    Has {
        var: String,
        name: String,
        cmp: Cmp,
        value: Value,
    },
    /// A relation of `relation` type whose role edges reach the given vars.
    /// `var` names the relation node itself (so its attributes can be tested).
    Rel {
        var: Option<String>,
        relation: String,
        roles: Vec<(String, String)>,
    },
    /// Negation as failure: no extension of the current binding satisfies
    /// the inner conjunction.
    NotExists(Vec<Conjunct>),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Pattern {
    pub conjuncts: Vec<Conjunct>,
}

impl Pattern {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn isa(mut self, var: &str, type_name: &str) -> Self {
        self.conjuncts.push(Conjunct::Isa {
            var: var.into(),
            type_name: type_name.into(),
        });
        self
    }

    pub fn has(mut self, var: &str, name: &str, cmp: Cmp, value: impl Into<Value>) -> Self {
        self.conjuncts.push(Conjunct::Has {
            var: var.into(),
            name: name.into(),
            cmp,
            value: value.into(),
        });
        self
    }

    pub fn rel(mut self, var: Option<&str>, relation: &str, roles: &[(&str, &str)]) -> Self {
        self.conjuncts.push(Conjunct::Rel {
            var: var.map(Into::into),
            relation: relation.into(),
            roles: roles.iter().map(|(r, v)| ((*r).into(), (*v).into())).collect(),
        });
        self
    }

    pub fn not_exists(mut self, inner: Pattern) -> Self {
        self.conjuncts.push(Conjunct::NotExists(inner.conjuncts));
        self
    }

    /// Variables bound by positive conjuncts.
    pub fn bound_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for c in &self.conjuncts {
            match c {
                Conjunct::Isa { var, .. } => {
                    out.insert(var.clone());
                }
                Conjunct::Rel { var, roles, .. } => {
                    out.extend(var.iter().cloned());
                    out.extend(roles.iter().map(|(_, v)| v.clone()));
                }
                Conjunct::Has { .. } | Conjunct::NotExists(_) => {}
            }
        }
        out
    }
}

pub(super) fn run(graph: &SceneGraph, pattern: &Pattern) -> Result<Vec<Binding>> {
    validate(graph, &pattern.conjuncts, &mut BTreeSet::new())?;
    let mut out = Vec::new();
    solve(graph, &pattern.conjuncts, &mut Binding::new(), &mut |b| {
        out.push(b.clone());
        true
    });
    out.sort_by(|a, b| a.values().cmp(b.values()));
    out.dedup();
    Ok(out)
}

fn validate(graph: &SceneGraph, conjuncts: &[Conjunct], bound: &mut BTreeSet<String>) -> Result<()> {
    let o = graph.ontology();
    for c in conjuncts {
        match c {
            Conjunct::Isa { var, type_name } => {
                if o.entity(type_name).is_none() {
                    return Err(Error::Pattern(format!("unknown entity type `{type_name}`")));
                }
                bound.insert(var.clone());
            }
            Conjunct::Has { var, name, .. } => {
                if o.attribute(name).is_none() {
                    return Err(Error::Pattern(format!("unknown attribute `{name}`")));
                }
                if !bound.contains(var) {
                    return Err(Error::Pattern(format!(
                        "attribute test on `{var}` before it is bound"
                    )));
                }
            }
            Conjunct::Rel {
                var,
                relation,
                roles,
            } => {
                let rel = o
                    .relation(relation)
                    .ok_or_else(|| Error::Pattern(format!("unknown relation `{relation}`")))?;
                if roles.is_empty() {
                    return Err(Error::Pattern(format!("relation `{relation}` without roles")));
                }
                for (role, v) in roles {
                    if !rel.roles.contains(&role.as_str()) {
                        return Err(Error::Pattern(format!(
                            "relation `{relation}` has no role `{role}`"
                        )));
                    }
                    bound.insert(v.clone());
                }
                bound.extend(var.iter().cloned());
            }
            Conjunct::NotExists(inner) => {
                if inner.is_empty() {
                    return Err(Error::Pattern("empty negated conjunction".into()));
                }
                validate(graph, inner, &mut bound.clone())?;
            }
        }
    }
    Ok(())
}

/// Depth-first join. `emit` returns false to stop the search early.
fn solve(
    graph: &SceneGraph,
    conjuncts: &[Conjunct],
    binding: &mut Binding,
    emit: &mut dyn FnMut(&Binding) -> bool,
) -> bool {
    let Some((first, rest)) = conjuncts.split_first() else {
        return emit(binding);
    };
    match first {
        Conjunct::Isa { var, type_name } => {
            if let Some(&id) = binding.get(var) {
                let ok = graph.node(id).is_some_and(|n| {
                    n.kind == NodeKind::Entity && graph.ontology().is_subtype(n.type_name, type_name)
                });
                return !ok || solve(graph, rest, binding, emit);
            }
            for id in graph.entities_of(type_name) {
                binding.insert(var.clone(), id);
                let go_on = solve(graph, rest, binding, emit);
                binding.remove(var);
                if !go_on {
                    return false;
                }
            }
            true
        }
        Conjunct::Has {
            var,
            name,
            cmp,
            value,
        } => {
            let id = binding[var];
            let ok = graph
                .attributes(id)
                .any(|(n, v)| n == name && cmp.holds(v, value));
            !ok || solve(graph, rest, binding, emit)
        }
        Conjunct::Rel {
            var,
            relation,
            roles,
        } => {
            let candidates: Vec<NodeId> = match var.as_ref().and_then(|v| binding.get(v)) {
                Some(&id) => vec![id],
                None => match roles.iter().find_map(|(_, v)| binding.get(v)) {
                    Some(&anchor) => {
                        let mut c: Vec<_> = graph.relations_of(anchor, relation).collect();
                        c.sort_unstable();
                        c
                    }
                    None => graph.relations_by_type(relation).to_vec(),
                },
            };
            for rel in candidates {
                if graph.node(rel).map(|n| n.type_name) != Some(relation.as_str()) {
                    continue;
                }
                let players: Vec<(&str, NodeId)> = graph.role_players(rel).collect();
                let mut added = Vec::new();
                if let Some(v) = var {
                    if !binding.contains_key(v) {
                        binding.insert(v.clone(), rel);
                        added.push(v.clone());
                    }
                }
                let go_on = bind_roles(graph, roles, &players, binding, &mut added, rest, emit);
                for v in added {
                    binding.remove(&v);
                }
                if !go_on {
                    return false;
                }
            }
            true
        }
        Conjunct::NotExists(inner) => {
            let mut found = false;
            let mut scratch = binding.clone();
            solve(graph, inner, &mut scratch, &mut |_| {
                found = true;
                false
            });
            found || solve(graph, rest, binding, emit)
        }
    }
}

fn bind_roles(
    graph: &SceneGraph,
    roles: &[(String, String)],
    players: &[(&str, NodeId)],
    binding: &mut Binding,
    added: &mut Vec<String>,
    rest: &[Conjunct],
    emit: &mut dyn FnMut(&Binding) -> bool,
) -> bool {
    let Some(((role, var), more)) = roles.split_first() else {
        return solve(graph, rest, binding, emit);
    };
    for &(r, target) in players {
        if r != role {
            continue;
        }
        match binding.get(var) {
            Some(&id) if id != target => continue,
            Some(_) => {
                if !bind_roles(graph, more, players, binding, added, rest, emit) {
                    return false;
                }
            }
            None => {
                binding.insert(var.clone(), target);
                let go_on = bind_roles(graph, more, players, binding, added, rest, emit);
                binding.remove(var);
                if !go_on {
                    return false;
                }
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty() -> Vec<(&'static str, Value)> {
        Vec::new()
    }

    fn dashed_pattern() -> Pattern {
        Pattern::new()
            .isa("x", "lane_marking")
            .has("x", "lane_marking_type", Cmp::Eq, "dashed")
    }

    #[test]
    fn single_dashed_marking_matches_once() {
        let mut g = SceneGraph::new();
        let m = g.add_entity("lane_marking", [("lane_marking_type", "dashed")]).unwrap();
        g.add_entity("lane_marking", [("lane_marking_type", "solid")]).unwrap();
        let res = g.match_pattern(&dashed_pattern()).unwrap();
        assert_eq!(res.len(), 1);
        assert_eq!(res[0]["x"], m);
    }

    #[test]
    fn no_markings_no_bindings() {
        let mut g = SceneGraph::new();
        g.add_entity("vehicle", empty()).unwrap();
        assert!(g.match_pattern(&dashed_pattern()).unwrap().is_empty());
    }

    #[test]
    fn numeric_comparison() {
        let mut g = SceneGraph::new();
        let hi = g.add_entity("vehicle", [("collision_probability", 0.25)]).unwrap();
        g.add_entity("artificial_object", [("collision_probability", 0.1)]).unwrap();
        let p = Pattern::new()
            .isa("o", "object")
            .has("o", "collision_probability", Cmp::Gt, 0.2);
        let res = g.match_pattern(&p).unwrap();
        assert_eq!(res.len(), 1);
        assert_eq!(res[0]["o"], hi);
    }

    #[test]
    fn relation_join_and_relation_attributes() {
        let mut g = SceneGraph::new();
        let ego = g.add_entity("ego", empty()).unwrap();
        let lane = g.add_entity("lane", empty()).unwrap();
        let near = g.add_entity("vehicle", empty()).unwrap();
        let far = g.add_entity("vehicle", empty()).unwrap();
        g.add_relation("is_on", [("physical", ego), ("road", lane)], empty()).unwrap();
        g.add_relation("is_on", [("physical", near), ("road", lane)], empty()).unwrap();
        g.add_relation("relative_position", [("object", near), ("ego", ego)], [("distance", 12.0)])
            .unwrap();
        g.add_relation("relative_position", [("object", far), ("ego", ego)], [("distance", 30.0)])
            .unwrap();

        let p = Pattern::new()
            .isa("e", "ego")
            .rel(None, "is_on", &[("physical", "e"), ("road", "l")])
            .isa("o", "object")
            .rel(None, "is_on", &[("physical", "o"), ("road", "l")])
            .rel(Some("rp"), "relative_position", &[("object", "o"), ("ego", "e")])
            .has("rp", "distance", Cmp::Lt, 20.0);
        let res = g.match_pattern(&p).unwrap();
        assert_eq!(res.len(), 1);
        assert_eq!(res[0]["o"], near);
        assert_eq!(res[0]["l"], lane);
    }

    #[test]
    fn negation_as_failure() {
        let mut g = SceneGraph::new();
        let m = g.add_entity("lane_marking", [("lane_marking_type", "dashed")]).unwrap();
        let p = dashed_pattern().not_exists(Pattern::new().isa("p", "pedestrian"));
        assert_eq!(g.match_pattern(&p).unwrap().len(), 1);
        g.add_entity("pedestrian", empty()).unwrap();
        assert!(g.match_pattern(&p).unwrap().is_empty());
        let _ = m;
    }

    #[test]
    fn malformed_patterns_rejected() {
        let g = SceneGraph::new();
        let bad = [
            Pattern::new().isa("x", "dragon"),
            Pattern::new().has("x", "width", Cmp::Gt, 1.0),
            Pattern::new().isa("x", "object").has("x", "colour", Cmp::Eq, "red"),
            Pattern::new().rel(None, "likes", &[("a", "x")]),
            Pattern::new().rel(None, "is_on", &[("driver", "x")]),
        ];
        for p in bad {
            assert!(matches!(g.match_pattern(&p), Err(Error::Pattern(_))), "{p:?}");
        }
    }

    #[test]
    fn string_and_number_never_compare() {
        assert!(!Cmp::Eq.holds(&Value::from("1"), &Value::Int(1)));
        assert!(Cmp::Eq.holds(&Value::Real(1.0), &Value::Int(1)));
        assert!(Cmp::Le.holds(&Value::Real(0.5), &Value::Real(0.5)));
        assert!(!Cmp::Lt.holds(&Value::Real(f64::NAN), &Value::Real(0.5)));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            // adding unrelated nodes never removes a positive-pattern binding
            #[test]
            fn monotone_under_additions(
                probs in proptest::collection::vec(0.0f64..1.0, 0..6),
                extra in proptest::collection::vec(0.0f64..1.0, 0..6),
            ) {
                let mut g = SceneGraph::new();
                for p in &probs {
                    g.add_entity("vehicle", [("collision_probability", *p)]).unwrap();
                }
                let pat = Pattern::new()
                    .isa("o", "object")
                    .has("o", "collision_probability", Cmp::Gt, 0.2);
                let before = g.match_pattern(&pat).unwrap();
                for p in &extra {
                    g.add_entity("pedestrian", [("collision_probability", *p)]).unwrap();
                    g.add_entity("lane", Vec::<(&str, Value)>::new()).unwrap();
                }
                let after = g.match_pattern(&pat).unwrap();
                for b in &before {
                    prop_assert!(after.contains(b));
                }
            }
        }
    }
}

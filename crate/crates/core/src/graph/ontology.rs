//! Fixed traffic ontology: entity hierarchy, relation types with their roles,
//! and the attribute vocabulary.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EntityType {
    pub name: &'static str,
    pub parent: Option<&'static str>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RelationType {
    pub name: &'static str,
    pub roles: &'static [&'static str],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    Str,
    Real,
    Bool,
    Int,
}

#[derive(Debug)]
pub struct Ontology {
    entities: &'static [EntityType],
    relations: &'static [RelationType],
    attributes: &'static [(&'static str, ValueKind)],
}

const fn ty(name: &'static str, parent: &'static str) -> EntityType {
    EntityType {
        name,
        parent: Some(parent),
    }
}

static ENTITIES: &[EntityType] = &[
    EntityType {
        name: "thing",
        parent: None,
    },
    ty("physical_entity", "thing"),
    ty("object", "physical_entity"),
    ty("vehicle", "object"),
    ty("vru", "object"),
    ty("pedestrian", "vru"),
    ty("artificial_object", "object"),
    ty("ego", "physical_entity"),
    ty("infrastructure", "thing"),
    ty("road_part", "infrastructure"),
    ty("lane", "road_part"),
    ty("lane_marking", "infrastructure"),
];

static RELATIONS: &[RelationType] = &[
    RelationType {
        name: "is_on",
        roles: &["physical", "road"],
    },
    RelationType {
        name: "bounds",
        roles: &["lane_marking", "road"],
    },
    RelationType {
        name: "relative_position",
        roles: &["object", "ego"],
    },
    RelationType {
        name: "crossing_acceptability",
        roles: &["lane_marking", "ego"],
    },
    RelationType {
        name: "has_risk_level",
        roles: &["object", "ego"],
    },
];

static ATTRIBUTES: &[(&str, ValueKind)] = &[
    ("label", ValueKind::Str),
    ("lane_marking_type", ValueKind::Str),
    ("side", ValueKind::Str),
    ("direction", ValueKind::Int),
    ("classification_certainty", ValueKind::Real),
    ("length", ValueKind::Real),
    ("width", ValueKind::Real),
    ("height", ValueKind::Real),
    ("velocity", ValueKind::Real),
    ("collision_probability", ValueKind::Real),
    ("crossing_road", ValueKind::Bool),
    ("longitudinal", ValueKind::Real),
    ("lateral", ValueKind::Real),
    ("distance", ValueKind::Real),
    ("oncoming", ValueKind::Bool),
    ("acceptability", ValueKind::Int),
    ("risk_level", ValueKind::Str),
    ("priority", ValueKind::Int),
];

static TRAFFIC: Ontology = Ontology {
    entities: ENTITIES,
    relations: RELATIONS,
    attributes: ATTRIBUTES,
};

impl Ontology {
    pub fn traffic() -> &'static Ontology {
        &TRAFFIC
    }

    pub fn entity(&self, name: &str) -> Option<&EntityType> {
        self.entities.iter().find(|t| t.name == name)
    }

    pub fn relation(&self, name: &str) -> Option<&RelationType> {
        self.relations.iter().find(|r| r.name == name)
    }

    pub fn attribute(&self, name: &str) -> Option<(&'static str, ValueKind)> {
        self.attributes.iter().find(|(n, _)| *n == name).copied()
    }

    pub fn entity_type_name(&self, name: &str) -> Option<&'static str> {
        self.entities.iter().find(|t| t.name == name).map(|t| t.name)
    }

    pub fn entity_types(&self) -> &[EntityType] {
        self.entities
    }

    /// True when `name` equals `ancestor` or descends from it.
    pub fn is_subtype(&self, name: &str, ancestor: &str) -> bool {
        let mut cur = self.entity(name);
        while let Some(t) = cur {
            if t.name == ancestor {
                return true;
            }
            cur = t.parent.and_then(|p| self.entity(p));
        }
        false
    }
}

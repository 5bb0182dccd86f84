//! Adaptive risk potential fields for objects and lane markings.
//!
//! Object fields are bivariate Gaussians aligned with the predicted object
//! heading at every horizon step; marking fields are Gaussian ridges along a
//! cubic lateral polynomial `ỹ(x)`. Amplitudes and spreads come from the
//! resolved rule conclusions via fixed lookup tables.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{NodeId, SceneGraph, Value};
use crate::rules::{self, RiskLevel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineType {
    Solid,
    Dashed,
}

impl LineType {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "solid" => Some(LineType::Solid),
            "dashed" => Some(LineType::Dashed),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LineType::Solid => "solid",
            LineType::Dashed => "dashed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectClass {
    Car,
    ArtObject,
    Pedestrian,
}

impl ObjectClass {
    /// Graph entity type used for this class.
    pub fn entity_type(self) -> &'static str {
        match self {
            ObjectClass::Car => "vehicle",
            ObjectClass::ArtObject => "artificial_object",
            ObjectClass::Pedestrian => "pedestrian",
        }
    }

    /// Field class for a graph entity type; unparameterized object types use
    /// the artificial-object row.
    pub fn from_entity_type(graph: &SceneGraph, type_name: &str) -> Self {
        let o = graph.ontology();
        if o.is_subtype(type_name, "vehicle") {
            ObjectClass::Car
        } else if o.is_subtype(type_name, "vru") {
            ObjectClass::Pedestrian
        } else {
            ObjectClass::ArtObject
        }
    }
}

/// Marking amplitude and standard deviation for a line type and resolved
/// crossing acceptability.
pub fn marking_params(line: LineType, acceptability: u8) -> (f64, f64) {
    let amplitude = match (line, acceptability) {
        (LineType::Solid, 0) => 4.0,
        (LineType::Dashed, 0) => 1.5,
        (_, _) => 0.0,
    };
    (amplitude, 0.6)
}

/// Object amplitude and spreads `(A_O, σ_x, σ_y)` from class, risk level and
/// footprint (`length`, `width` in metres).
pub fn object_params(class: ObjectClass, risk: RiskLevel, length: f64, width: f64) -> (f64, f64, f64) {
    use ObjectClass::*;
    use RiskLevel::*;
    let (amplitude, offset) = match (class, risk) {
        (Car, Low) => (2.0, 0.05),
        (Car, Medium) => (3.0, 0.1),
        (Car, High) => (4.0, 0.3),
        (ArtObject, Low) => (1.0, 0.2),
        (ArtObject, Medium) => (2.0, 0.25),
        (ArtObject, High) => (3.0, 0.4),
        (Pedestrian, Low) => (2.0, 1.2),
        (Pedestrian, Medium) => (3.0, 1.7),
        (Pedestrian, High) => (4.0, 2.2),
    };
    (amplitude, 1.5 * length + offset, 1.2 * width + offset)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

/// Field value with its gradient in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FieldSample {
    pub value: f64,
    pub dx: f64,
    pub dy: f64,
}

impl std::ops::AddAssign for FieldSample {
    fn add_assign(&mut self, o: Self) {
        self.value += o.value;
        self.dx += o.dx;
        self.dy += o.dy;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectField {
    pub amplitude: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    /// Predicted centre poses for horizon steps `0..=N`.
    pub centers: Vec<Pose>,
    #[serde(default)]
    pub label: String,
}

impl ObjectField {
    fn center(&self, k: usize) -> Pose {
        // beyond the stored horizon the last prediction is held
        self.centers[k.min(self.centers.len() - 1)]
    }

    pub fn eval(&self, k: usize, x: f64, y: f64) -> f64 {
        self.sample(k, x, y).value
    }

    pub fn sample(&self, k: usize, x: f64, y: f64) -> FieldSample {
        let c = self.center(k);
        let (s, co) = c.theta.sin_cos();
        let (dx, dy) = (x - c.x, y - c.y);
        // offset in the object frame
        let lx = co * dx + s * dy;
        let ly = -s * dx + co * dy;
        let (ix, iy) = (1.0 / (self.sigma_x * self.sigma_x), 1.0 / (self.sigma_y * self.sigma_y));
        let f = lx * lx * ix + ly * ly * iy;
        let value = self.amplitude * (-0.5 * f).exp();
        // ∂U/∂(x,y) = −U · R Σ⁻¹ Rᵀ d
        let gx = lx * ix * co - ly * iy * s;
        let gy = lx * ix * s + ly * iy * co;
        FieldSample {
            value,
            dx: -value * gx,
            dy: -value * gy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkingField {
    pub amplitude: f64,
    pub sigma: f64,
    /// `ỹ(x) = c0 + c1·x + c2·x² + c3·x³`.
    pub polynomial: [f64; 4],
    #[serde(default)]
    pub label: String,
}

pub fn poly_eval(c: &[f64; 4], x: f64) -> f64 {
    ((c[3] * x + c[2]) * x + c[1]) * x + c[0]
}

pub fn poly_slope(c: &[f64; 4], x: f64) -> f64 {
    (3.0 * c[3] * x + 2.0 * c[2]) * x + c[1]
}

impl MarkingField {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.sample(x, y).value
    }

    pub fn sample(&self, x: f64, y: f64) -> FieldSample {
        if self.amplitude == 0.0 {
            return FieldSample::default();
        }
        let inv = 1.0 / (self.sigma * self.sigma);
        let e = y - poly_eval(&self.polynomial, x);
        let value = self.amplitude * (-0.5 * e * e * inv).exp();
        let de = -value * e * inv;
        FieldSample {
            value,
            dx: -de * poly_slope(&self.polynomial, x),
            dy: de,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RiskFieldSet {
    pub objects: Vec<ObjectField>,
    pub markings: Vec<MarkingField>,
}

impl RiskFieldSet {
    pub fn is_empty(&self) -> bool {
        self.objects.is_empty() && self.markings.is_empty()
    }

    /// Object plus marking risk at horizon step `k`.
    pub fn total(&self, k: usize, x: f64, y: f64) -> f64 {
        self.sample(k, x, y).value
    }

    pub fn sample(&self, k: usize, x: f64, y: f64) -> FieldSample {
        self.weighted_sample(k, x, y, 1.0, 1.0)
    }

    /// Object fields scaled by `object_weight` plus marking fields scaled by
    /// `marking_weight`.
    pub fn weighted_sample(&self, k: usize, x: f64, y: f64, object_weight: f64, marking_weight: f64) -> FieldSample {
        let scale = |f: FieldSample, w: f64| FieldSample {
            value: w * f.value,
            dx: w * f.dx,
            dy: w * f.dy,
        };
        let mut objects = FieldSample::default();
        for o in &self.objects {
            objects += o.sample(k, x, y);
        }
        let mut markings = FieldSample::default();
        for m in &self.markings {
            markings += m.sample(x, y);
        }
        let mut acc = scale(objects, object_weight);
        acc += scale(markings, marking_weight);
        acc
    }

    /// Sum of amplitudes, an upper bound of [`Self::total`].
    pub fn amplitude_sum(&self) -> f64 {
        self.objects.iter().map(|o| o.amplitude).sum::<f64>()
            + self.markings.iter().map(|m| m.amplitude).sum::<f64>()
    }
}

/// Per-cycle geometry the graph does not hold: object predictions and marking
/// polynomials, keyed by graph node.
#[derive(Debug, Clone, Default)]
pub struct FieldInputs {
    pub predictions: BTreeMap<NodeId, Vec<Pose>>,
    pub markings: BTreeMap<NodeId, [f64; 4]>,
}

fn real_attr(graph: &SceneGraph, id: NodeId, name: &str) -> Result<f64> {
    graph
        .attribute(id, name)
        .and_then(Value::as_f64)
        .ok_or_else(|| Error::Input(format!("node {id} lacks numeric attribute `{name}`")))
}

fn label(graph: &SceneGraph, id: NodeId) -> String {
    graph
        .attribute(id, "label")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_owned()
}

/// Populates the field set from the resolved rule conclusions. Expects
/// `apply_rules` to have run on `graph`; predictions must span `horizon + 1`
/// steps.
pub fn build_risk_fields(graph: &SceneGraph, inputs: &FieldInputs, horizon: usize) -> Result<RiskFieldSet> {
    let mut set = RiskFieldSet::default();
    for o in graph.entities_of("object") {
        let centers = inputs
            .predictions
            .get(&o)
            .ok_or_else(|| Error::Input(format!("no prediction for object node {o}")))?;
        if centers.len() < horizon + 1 {
            return Err(Error::Input(format!(
                "prediction for node {o} has {} poses, need {}",
                centers.len(),
                horizon + 1
            )));
        }
        let risk = rules::risk_level(graph, o).ok_or(Error::Coverage {
            relation: rules::HAS_RISK_LEVEL,
            anchor: o,
        })?;
        let ty = graph.node(o).map(|n| n.type_name).unwrap_or("object");
        let class = ObjectClass::from_entity_type(graph, ty);
        let (amplitude, sigma_x, sigma_y) = object_params(
            class,
            risk.level,
            real_attr(graph, o, "length")?,
            real_attr(graph, o, "width")?,
        );
        set.objects.push(ObjectField {
            amplitude,
            sigma_x,
            sigma_y,
            centers: centers[..=horizon].to_vec(),
            label: label(graph, o),
        });
    }
    for m in graph.entities_of("lane_marking") {
        let polynomial = *inputs
            .markings
            .get(&m)
            .ok_or_else(|| Error::Input(format!("no polynomial for marking node {m}")))?;
        let line = graph
            .attribute(m, "lane_marking_type")
            .and_then(Value::as_str)
            .and_then(LineType::parse)
            .ok_or_else(|| Error::Input(format!("marking node {m} has no line type")))?;
        let crossing = rules::crossing_acceptability(graph, m).ok_or(Error::Coverage {
            relation: rules::CROSSING_ACCEPTABILITY,
            anchor: m,
        })?;
        let (amplitude, sigma) = marking_params(line, crossing.acceptability);
        set.markings.push(MarkingField {
            amplitude,
            sigma,
            polynomial,
            label: label(graph, m),
        });
    }
    Ok(set)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub resolution: f64,
}

impl RasterSpec {
    fn axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
        let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| lo + i as f64 * step).collect()
    }

    pub fn xs(&self) -> Vec<f64> {
        Self::axis(self.x_min, self.x_max, self.resolution)
    }

    pub fn ys(&self) -> Vec<f64> {
        Self::axis(self.y_min, self.y_max, self.resolution)
    }
}

/// Writes the total field at horizon step `k` as a comma-separated matrix:
/// header row of x coordinates, then one row per y (first column y).
pub fn write_raster<W: Write>(out: W, fields: &RiskFieldSet, k: usize, spec: &RasterSpec) -> Result<()> {
    if !(spec.resolution > 0.0) || spec.x_max < spec.x_min || spec.y_max < spec.y_min {
        return Err(Error::Input("invalid raster bounds".into()));
    }
    let mut w = csv::Writer::from_writer(out);
    let xs = spec.xs();
    let mut header = vec!["y\\x".to_owned()];
    header.extend(xs.iter().map(|x| format!("{x:.3}")));
    w.write_record(&header)?;
    for y in spec.ys() {
        let mut row = vec![format!("{y:.3}")];
        row.extend(xs.iter().map(|&x| format!("{:.6}", fields.total(k, x, y))));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "raster".into(),
        source: e,
    })?;
    Ok(())
}

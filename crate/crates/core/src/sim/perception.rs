//! Object tracks as seen by the ego and the per-cycle scene graph built from
//! them.

use serde::{Deserialize, Serialize};

use crate::collision::{smoothed_collision_probability, CollisionParams, EdgeObservation, ObservationNoise};
use crate::error::Result;
use crate::field::{poly_eval, FieldInputs, ObjectClass, Pose};
use crate::graph::{NodeId, SceneGraph, Value};
use crate::vehicle::{EgoState, VehicleParams};

use super::geometry::OrientedBox;
use super::scenario::{ActorSpec, LaneSpec, MarkingSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectTrack {
    pub id: String,
    pub label: String,
    pub class: ObjectClass,
    /// Footprint centre and heading.
    pub pose: Pose,
    pub speed: f64,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub certainty: f64,
    /// Time since first observation, s.
    pub time_in_scene: f64,
}

impl ObjectTrack {
    pub fn from_actor(a: &ActorSpec) -> Self {
        Self {
            id: a.id.clone(),
            label: if a.label.is_empty() { a.id.clone() } else { a.label.clone() },
            class: a.class,
            pose: Pose {
                x: a.x,
                y: a.y,
                theta: a.heading,
            },
            speed: a.speed,
            length: a.length,
            width: a.width,
            height: a.height,
            certainty: 0.0,
            time_in_scene: 0.0,
        }
    }

    pub fn velocity(&self) -> (f64, f64) {
        let (s, c) = self.pose.theta.sin_cos();
        (self.speed * c, self.speed * s)
    }

    pub fn advance(&mut self, dt: f64) {
        let (vx, vy) = self.velocity();
        self.pose.x += vx * dt;
        self.pose.y += vy * dt;
    }

    pub fn footprint(&self) -> OrientedBox {
        OrientedBox {
            cx: self.pose.x,
            cy: self.pose.y,
            theta: self.pose.theta,
            length: self.length,
            width: self.width,
        }
    }
}

/// Poses `0..=n` advanced at constant velocity along the current heading.
pub fn predict_constant_velocity(track: &ObjectTrack, n: usize, t_s: f64) -> Vec<Pose> {
    let (c, s) = (track.pose.theta.cos(), track.pose.theta.sin());
    (0..=n)
        .map(|k| {
            let d = k as f64 * t_s * track.speed;
            Pose {
                x: track.pose.x + d * c,
                y: track.pose.y + d * s,
                theta: track.pose.theta,
            }
        })
        .collect()
}

/// Classifier confidence growing with observation time and proximity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CertaintyModel {
    pub base: f64,
    /// Gain per second in scene.
    pub rate_t: f64,
    /// Gain per metre closer than `d_ref`.
    pub rate_d: f64,
    pub d_ref: f64,
}

impl Default for CertaintyModel {
    fn default() -> Self {
        Self {
            base: 0.3,
            rate_t: 0.1,
            rate_d: 0.005,
            d_ref: 60.0,
        }
    }
}

/// Advances the track's observation time by `dt` and raises its certainty;
/// certainty never decreases.
pub fn update_certainty(track: &mut ObjectTrack, distance: f64, dt: f64, model: &CertaintyModel) -> f64 {
    track.time_in_scene += dt;
    let c = model.base + model.rate_t * track.time_in_scene + model.rate_d * (model.d_ref - distance).max(0.0);
    track.certainty = track.certainty.max(c.clamp(0.0, 0.99));
    track.certainty
}

/// The object's silhouette as an edge facing the ego, measured from the
/// front bumper in the ego frame, with the relative motion expressed as a
/// heading difference. `None` when the object is behind the front bumper or
/// the two are not closing.
pub fn edge_observation(ego: &EgoState, vehicle: &VehicleParams, track: &ObjectTrack) -> Option<(EdgeObservation, f64)> {
    let (s, c) = ego.theta.sin_cos();
    let fx = ego.x + vehicle.front_offset() * c;
    let fy = ego.y + vehicle.front_offset() * s;
    let to_ego = |x: f64, y: f64| {
        let (dx, dy) = (x - fx, y - fy);
        (c * dx + s * dy, -s * dx + c * dy)
    };
    let pts = track.footprint().corners().map(|(x, y)| to_ego(x, y));
    let x_min = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let x_max = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let y_min = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let y_max = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    if x_max < 0.0 {
        return None;
    }
    let (vx, vy) = track.velocity();
    let (ox, oy) = (c * vx + s * vy, -s * vx + c * vy);
    let (ux, uy) = (ego.v - ox, -oy);
    if ux <= 1e-3 {
        return None;
    }
    let obs = EdgeObservation::exact(x_min.max(0.05), 0.5 * (y_min + y_max), (-uy).atan2(ux), y_max - y_min);
    Some((obs, ux.hypot(uy)))
}

/// Smoothed collision probability of the ego against one track.
pub fn track_collision_probability(
    ego: &EgoState,
    vehicle: &VehicleParams,
    track: &ObjectTrack,
    noise: &ObservationNoise,
    params: &CollisionParams,
) -> f64 {
    match edge_observation(ego, vehicle, track) {
        Some((obs, speed)) => smoothed_collision_probability(speed, &obs.with_noise(noise), params).unwrap_or(0.0),
        None => 0.0,
    }
}

fn lane_at<'a>(lanes: &'a [LaneSpec], x: f64, y: f64) -> Option<(usize, &'a LaneSpec)> {
    lanes
        .iter()
        .enumerate()
        .find(|(_, l)| (y - poly_eval(&l.center, x)).abs() <= 0.5 * l.width)
}

/// The ego's lane: the lane holding its whole footprint; while the footprint
/// straddles a marking the previous lane is kept as long as the footprint
/// still touches it, otherwise the lane under the footprint centre.
pub fn assign_ego_lane(lanes: &[LaneSpec], footprint: &OrientedBox, previous: Option<usize>) -> Option<usize> {
    let corners = footprint.corners();
    let holding: Vec<Option<usize>> = corners.iter().map(|c| lane_at(lanes, c.0, c.1).map(|(i, _)| i)).collect();
    if let Some(first) = holding[0] {
        if holding.iter().all(|h| *h == Some(first)) {
            return Some(first);
        }
    }
    if let Some(p) = previous {
        if p < lanes.len() && holding.contains(&Some(p)) {
            return Some(p);
        }
    }
    lane_at(lanes, footprint.cx, footprint.cy).map(|(i, _)| i)
}

/// Whether a walking road user is on the road or will be within the horizon.
pub fn is_crossing_road(track: &ObjectTrack, lanes: &[LaneSpec], n: usize, t_s: f64) -> bool {
    track.speed > 0.1
        && predict_constant_velocity(track, n, t_s)
            .iter()
            .any(|p| lane_at(lanes, p.x, p.y).is_some())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerceptionParams {
    pub certainty: CertaintyModel,
    pub noise: ObservationNoise,
    pub collision: CollisionParams,
    /// Objects farther than this from the ego are not observed, m.
    pub sensor_range: f64,
}

impl Default for PerceptionParams {
    fn default() -> Self {
        Self {
            certainty: CertaintyModel::default(),
            noise: ObservationNoise::default(),
            collision: CollisionParams::default(),
            sensor_range: 120.0,
        }
    }
}

/// Per-object facts written into the graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectFacts {
    pub track: usize,
    pub node: NodeId,
    pub collision_probability: f64,
    pub crossing_road: bool,
}

pub struct SceneContext {
    pub graph: SceneGraph,
    pub inputs: FieldInputs,
    pub objects: Vec<ObjectFacts>,
    /// Index into the scenario lanes of the lane the ego is on.
    pub ego_lane: Option<usize>,
}

impl SceneContext {
    /// A walking road user is on or about to enter the road.
    pub fn vru_crossing(&self) -> bool {
        self.objects.iter().any(|o| o.crossing_road)
    }
}

/// Observation distance between the ego footprint centre and a track.
pub fn observation_distance(ego: &EgoState, vehicle: &VehicleParams, track: &ObjectTrack) -> f64 {
    let b = OrientedBox::ego(ego, vehicle);
    (track.pose.x - b.cx).hypot(track.pose.y - b.cy)
}

/// Builds this cycle's scene graph from the road layout and the observed
/// tracks (`observed[i]` is false for tracks outside sensor range).
/// `previous_ego_lane` is the ego lane of the previous cycle.
#[allow(clippy::too_many_arguments)]
pub fn build_scene(
    ego: &EgoState,
    vehicle: &VehicleParams,
    lanes: &[LaneSpec],
    markings: &[MarkingSpec],
    tracks: &[ObjectTrack],
    observed: &[bool],
    horizon: usize,
    t_s: f64,
    params: &PerceptionParams,
    previous_ego_lane: Option<usize>,
) -> Result<SceneContext> {
    let mut g = SceneGraph::new();
    let mut inputs = FieldInputs::default();
    let ego_box = OrientedBox::ego(ego, vehicle);
    let ego_node = g.add_entity(
        "ego",
        [
            ("label", Value::from("ego")),
            ("velocity", Value::Real(ego.v)),
            ("length", Value::Real(vehicle.length)),
            ("width", Value::Real(vehicle.width)),
        ],
    )?;
    let mut lane_nodes = Vec::with_capacity(lanes.len());
    for l in lanes {
        lane_nodes.push(g.add_entity(
            "lane",
            [("label", Value::from(l.id.as_str())), ("direction", Value::Int(l.direction as i64))],
        )?);
    }
    for m in markings {
        let node = g.add_entity(
            "lane_marking",
            [
                ("label", Value::from(m.id.as_str())),
                ("lane_marking_type", Value::from(m.kind.as_str())),
            ],
        )?;
        inputs.markings.insert(node, m.polynomial);
        let ym = poly_eval(&m.polynomial, ego_box.cx);
        for (l, &ln) in lanes.iter().zip(&lane_nodes) {
            let yl = poly_eval(&l.center, ego_box.cx);
            if ((ym - yl).abs() - 0.5 * l.width).abs() <= 0.25 {
                let side = if ym > yl { "left" } else { "right" };
                g.add_relation("bounds", [("lane_marking", node), ("road", ln)], [("side", side)])?;
            }
        }
    }
    let ego_lane = assign_ego_lane(lanes, &ego_box, previous_ego_lane);
    if let Some(i) = ego_lane {
        g.add_relation("is_on", [("physical", ego_node), ("road", lane_nodes[i])], Vec::<(&str, Value)>::new())?;
    }

    let (s, c) = ego.theta.sin_cos();
    let mut objects = Vec::new();
    for (ti, t) in tracks.iter().enumerate() {
        if !observed[ti] {
            continue;
        }
        let cp = track_collision_probability(ego, vehicle, t, &params.noise, &params.collision);
        let crossing = t.class == ObjectClass::Pedestrian && is_crossing_road(t, lanes, horizon, t_s);
        let mut attrs = vec![
            ("label", Value::from(t.label.as_str())),
            ("length", Value::Real(t.length)),
            ("width", Value::Real(t.width)),
            ("height", Value::Real(t.height)),
            ("velocity", Value::Real(t.speed)),
            ("classification_certainty", Value::Real(t.certainty)),
            ("collision_probability", Value::Real(cp)),
        ];
        if t.class == ObjectClass::Pedestrian {
            attrs.push(("crossing_road", Value::Bool(crossing)));
        }
        let node = g.add_entity(t.class.entity_type(), attrs)?;
        if let Some((i, _)) = lane_at(lanes, t.pose.x, t.pose.y) {
            g.add_relation("is_on", [("physical", node), ("road", lane_nodes[i])], Vec::<(&str, Value)>::new())?;
        }
        let (dx, dy) = (t.pose.x - ego_box.cx, t.pose.y - ego_box.cy);
        let longitudinal = c * dx + s * dy;
        let oncoming = t.speed > 0.1 && (t.pose.theta - ego.theta).cos() < -0.5 && longitudinal > 0.0;
        g.add_relation(
            "relative_position",
            [("object", node), ("ego", ego_node)],
            [
                ("longitudinal", Value::Real(longitudinal)),
                ("lateral", Value::Real(-s * dx + c * dy)),
                ("distance", Value::Real(dx.hypot(dy))),
                ("oncoming", Value::Bool(oncoming)),
            ],
        )?;
        inputs.predictions.insert(node, predict_constant_velocity(t, horizon, t_s));
        objects.push(ObjectFacts {
            track: ti,
            node,
            collision_probability: cp,
            crossing_road: crossing,
        });
    }
    Ok(SceneContext {
        graph: g,
        inputs,
        objects,
        ego_lane,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collision::collision_probability;
    use crate::rules::{apply_rules, crossing_acceptability, risk_level, RiskLevel, RuleSet};
    use crate::sim::scenario::{family_b, family_d, two_lane_road, StaticObstacle};
    use approx::assert_relative_eq;

    fn track(class: ObjectClass, x: f64, y: f64, theta: f64, speed: f64) -> ObjectTrack {
        ObjectTrack {
            id: "o".into(),
            label: "o".into(),
            class,
            pose: Pose { x, y, theta },
            speed,
            length: 0.5,
            width: 0.5,
            height: 1.8,
            certainty: 0.0,
            time_in_scene: 0.0,
        }
    }

    #[test]
    fn constant_velocity_prediction() {
        let still = track(ObjectClass::Car, 3.0, 1.0, 0.2, 0.0);
        let p = predict_constant_velocity(&still, 23, 0.15);
        assert_eq!(p.len(), 24);
        assert!(p.iter().all(|q| *q == still.pose));

        let mover = track(ObjectClass::Car, 0.0, 0.0, 0.0, 2.0);
        let p = predict_constant_velocity(&mover, 5, 0.15);
        for (k, q) in p.iter().enumerate() {
            assert_relative_eq!(q.x, 0.3 * k as f64, epsilon = 1e-12);
            assert_eq!(q.y, 0.0);
        }

        let walker = track(ObjectClass::Pedestrian, 0.0, 0.0, std::f64::consts::FRAC_PI_2, 1.0);
        let p = predict_constant_velocity(&walker, 4, 0.15);
        assert_relative_eq!(p[4].y, 0.6, epsilon = 1e-12);
        assert!(p[4].x.abs() < 1e-12);
    }

    #[test]
    fn certainty_model() {
        let m = CertaintyModel::default();
        let mut t = track(ObjectClass::ArtObject, 0.0, 0.0, 0.0, 0.0);
        assert_eq!(update_certainty(&mut t, 80.0, 0.0, &m), 0.3);
        for _ in 0..100 {
            update_certainty(&mut t, 5.0, 1.0, &m);
        }
        assert_eq!(t.certainty, 0.99);

        let mut t = track(ObjectClass::ArtObject, 0.0, 0.0, 0.0, 0.0);
        let mut last = 0.0;
        for k in 0..50 {
            let d = if k % 2 == 0 { 10.0 } else { 70.0 };
            let c = update_certainty(&mut t, d, 0.05, &m);
            assert!(c >= last);
            last = c;
        }
    }

    #[test]
    fn certainty_crosses_threshold_at_closed_form_time() {
        let m = CertaintyModel::default();
        for d in [0.0, 20.0, 40.0] {
            let mut t = track(ObjectClass::ArtObject, 0.0, 0.0, 0.0, 0.0);
            let mut time = 0.0;
            while update_certainty(&mut t, d, 0.05, &m) <= 0.8 {
                time += 0.05;
            }
            // 0.3 + 0.1 t + 0.005 (60 - d) = 0.8
            let expected = (0.8 - 0.3 - 0.005 * (60.0 - d)) / 0.1;
            assert!((time + 0.05 - expected).abs() <= 0.05 + 1e-9, "{d}: {time} vs {expected}");
        }
    }

    #[test]
    fn static_object_ahead_on_course() {
        let ego = EgoState { v: 10.0, ..Default::default() };
        let vp = VehicleParams::default();
        let t = track(ObjectClass::ArtObject, 20.0, 0.0, 0.0, 0.0);
        let (obs, speed) = edge_observation(&ego, &vp, &t).unwrap();
        assert_relative_eq!(obs.x_bar, 20.0 - 0.25 - 3.6, epsilon = 1e-12);
        assert_eq!((obs.y_bar, obs.psi_bar, speed), (0.0, 0.0, 10.0));
        assert_relative_eq!(obs.w_t, 0.5, epsilon = 1e-12);

        let behind = track(ObjectClass::ArtObject, -5.0, 0.0, 0.0, 0.0);
        assert!(edge_observation(&ego, &vp, &behind).is_none());
        let parked = EgoState::default();
        assert_eq!(track_collision_probability(&parked, &vp, &t, &ObservationNoise::default(), &CollisionParams::default()), 0.0);
    }

    #[test]
    fn crossing_detection() {
        let (lanes, _) = two_lane_road();
        let towards = track(ObjectClass::Pedestrian, 30.0, -3.0, std::f64::consts::FRAC_PI_2, 1.4);
        assert!(is_crossing_road(&towards, &lanes, 23, 0.15));
        let away = track(ObjectClass::Pedestrian, 30.0, -3.0, -std::f64::consts::FRAC_PI_2, 1.4);
        assert!(!is_crossing_road(&away, &lanes, 23, 0.15));
        let standing = track(ObjectClass::Pedestrian, 30.0, 0.0, 0.0, 0.0);
        assert!(!is_crossing_road(&standing, &lanes, 23, 0.15));
    }

    fn scene(tracks: &[ObjectTrack], ego: &EgoState) -> SceneContext {
        let (lanes, markings) = two_lane_road();
        let observed = vec![true; tracks.len()];
        build_scene(
            ego,
            &VehicleParams::default(),
            &lanes,
            &markings,
            tracks,
            &observed,
            23,
            0.15,
            &PerceptionParams::default(),
            None,
        )
            .unwrap()
    }

    fn marking_node(ctx: &SceneContext, label: &str) -> NodeId {
        ctx.graph
            .entities_of("lane_marking")
            .into_iter()
            .find(|&m| ctx.graph.attribute(m, "label").and_then(Value::as_str) == Some(label))
            .unwrap()
    }

    #[test]
    fn graph_layout_and_sides() {
        let ctx = scene(&[], &EgoState::default());
        let g = &ctx.graph;
        g.check_integrity().unwrap();
        assert_eq!(g.entities_of("lane").len(), 2);
        assert_eq!(g.entities_of("lane_marking").len(), 3);
        // centre marking bounds both lanes: left of the ego lane, right of the other
        let center = marking_node(&ctx, "marking_center");
        let sides: Vec<String> = g
            .relations_of(center, "bounds")
            .map(|r| g.attribute(r, "side").unwrap().as_str().unwrap().to_owned())
            .collect();
        assert_eq!(sides, vec!["left".to_owned(), "right".to_owned()]);
        assert_eq!(g.relations_by_type("is_on").len(), 1);
    }

    #[test]
    fn rules_on_built_scene() {
        let ego = EgoState { v: 8.0, ..Default::default() };
        let mut obstacle = ObjectTrack::from_actor(&StaticObstacle::CardboardBox.actor(15.0));
        obstacle.certainty = 0.9;
        let mut ctx = scene(&[obstacle.clone()], &ego);
        apply_rules(&mut ctx.graph, &RuleSet::traffic()).unwrap();
        let center = marking_node(&ctx, "marking_center");
        assert_eq!(crossing_acceptability(&ctx.graph, center).unwrap().acceptability, 1);
        let o = ctx.objects[0].node;
        // box on collision course at 8 m/s: high probability dominates the size rule
        assert!(ctx.objects[0].collision_probability > 0.2);
        assert_eq!(risk_level(&ctx.graph, o).unwrap().level, RiskLevel::High);

        let b = family_b().remove(0);
        let tracks: Vec<ObjectTrack> = b.actors.iter().map(ObjectTrack::from_actor).collect();
        let mut ctx = scene(&tracks, &ego);
        apply_rules(&mut ctx.graph, &RuleSet::traffic()).unwrap();
        let center = marking_node(&ctx, "marking_center");
        assert_eq!(crossing_acceptability(&ctx.graph, center).unwrap().acceptability, 0);
    }

    #[test]
    fn crossing_pedestrian_closes_center_marking() {
        let d = family_d().remove(0);
        let tracks: Vec<ObjectTrack> = d.actors.iter().map(ObjectTrack::from_actor).collect();
        let mut ctx = scene(&tracks, &EgoState { v: 5.0, ..Default::default() });
        assert!(ctx.vru_crossing());
        apply_rules(&mut ctx.graph, &RuleSet::traffic()).unwrap();
        let center = marking_node(&ctx, "marking_center");
        let c = crossing_acceptability(&ctx.graph, center).unwrap();
        assert_eq!((c.acceptability, c.priority), (0, 4));
    }

    #[test]
    fn collision_probability_attribute_matches_module() {
        let ego = EgoState { v: 9.0, y: 0.3, theta: 0.05, ..Default::default() };
        let walker = track(ObjectClass::Pedestrian, 22.0, -2.5, 1.4, 1.6);
        let ctx = scene(&[walker.clone()], &ego);
        let written = ctx.graph.attribute(ctx.objects[0].node, "collision_probability").unwrap().as_f64().unwrap();
        let vp = VehicleParams::default();
        let (obs, speed) = edge_observation(&ego, &vp, &walker).unwrap();
        let noise = ObservationNoise::default();
        let direct = smoothed_collision_probability(speed, &obs.with_noise(&noise), &CollisionParams::default()).unwrap();
        assert_eq!(written, direct);
        assert!(direct <= collision_probability(&obs.with_noise(&noise), &CollisionParams::default()));
    }
}

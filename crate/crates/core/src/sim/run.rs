//! Closed-loop simulation of one scenario: perception, rule inference, risk
//! fields and trajectory optimisation every planning cycle, with the plant
//! integrated at a finer step in between.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{build_risk_fields, ObjectClass, RiskFieldSet};
use crate::planner::{shift_warm_start, solve, NmpcConfig, Reference, SolveRecord, SolveStatus, Trajectory};
use crate::rules::{apply_rules, rule_trace, RuleSet};
use crate::vehicle::{rollout, step, EgoInput, EgoState};

use super::geometry::{bounding_box_distance, OrientedBox};
use super::perception::{build_scene, observation_distance, update_certainty, ObjectTrack, PerceptionParams};
use super::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActuationMode {
    /// The plant applies the first planned input for the whole cycle.
    #[default]
    Perfect,
    /// The planned inputs are applied with feedback on the deviation from
    /// the planned velocity and path.
    Controller,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerGains {
    pub k_p: f64,
    pub k_py: f64,
    pub k_dy: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            k_p: 1.0,
            k_py: 0.5,
            k_dy: 0.1,
        }
    }
}

/// Proportional speed feedback, clamped to the acceleration bounds.
pub fn longitudinal_controller(v: f64, v_planned: f64, gains: &ControllerGains, bounds: &crate::vehicle::Bounds) -> f64 {
    (gains.k_p * (v_planned - v)).clamp(bounds.input_lower[0], bounds.input_upper[0])
}

/// Proportional-derivative steering-rate feedback on the lateral error to
/// the planned path (positive when the path lies to the left).
pub fn lateral_controller(e: f64, e_dot: f64, gains: &ControllerGains, bounds: &crate::vehicle::Bounds) -> f64 {
    (gains.k_py * e + gains.k_dy * e_dot).clamp(bounds.input_lower[1], bounds.input_upper[1])
}

/// Optional per-cycle artefacts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosticRequest {
    pub rule_trace: bool,
    pub solver_log: bool,
    /// Keep the field set of this planning cycle.
    pub raster_cycle: Option<usize>,
    /// Keep the scene-graph dump of this planning cycle.
    pub graph_cycle: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    pub plant_dt: f64,
    /// Plant steps per planning cycle.
    pub replan_every: usize,
    pub mode: ActuationMode,
    pub gains: ControllerGains,
    pub perception: PerceptionParams,
    /// Goal reached within this distance of the goal point, m.
    pub goal_radius: f64,
    /// Perturb observed object poses with the observation noise.
    pub perception_noise: bool,
    pub seed: u64,
    /// Standstill without reaching the goal for this long counts as dead-lock, s.
    pub deadlock_window: f64,
    pub record_trace: bool,
    pub diagnostics: DiagnosticRequest,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            plant_dt: 0.05,
            replan_every: 3,
            mode: ActuationMode::Perfect,
            gains: ControllerGains::default(),
            perception: PerceptionParams::default(),
            goal_radius: 2.0,
            perception_noise: false,
            seed: 0,
            deadlock_window: 10.0,
            record_trace: true,
            diagnostics: DiagnosticRequest::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectMetrics {
    pub id: String,
    pub class: ObjectClass,
    /// Smallest bounding-box distance to the ego over the run, m.
    pub min_distance: f64,
    /// Smallest bounding-box distance while the ego stood still, m.
    pub standstill_distance: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub solves: usize,
    pub converged: usize,
    pub max_iterations: usize,
    pub stalled: usize,
    pub infeasible_starts: usize,
    pub worst_violation: f64,
    /// Largest state deviation between a returned trajectory and the
    /// re-simulation of its inputs.
    pub worst_dynamics_residual: f64,
    /// Solves whose returned cost exceeded the warm-start cost.
    pub descent_failures: usize,
}

impl SolverSummary {
    fn add(&mut self, t: &Trajectory, config: &NmpcConfig) {
        self.solves += 1;
        match t.status {
            SolveStatus::Converged => self.converged += 1,
            SolveStatus::MaxIterations => self.max_iterations += 1,
            SolveStatus::Stalled => self.stalled += 1,
            SolveStatus::InfeasibleStart => {
                self.infeasible_starts += 1;
                return;
            }
        }
        self.worst_violation = self.worst_violation.max(t.max_violation);
        let again = rollout(&t.states[0], &t.inputs, &config.vehicle, config.t_s);
        let residual = again
            .iter()
            .zip(&t.states)
            .flat_map(|(a, b)| a.to_array().into_iter().zip(b.to_array()).map(|(p, q)| (p - q).abs()))
            .fold(0.0, f64::max);
        self.worst_dynamics_residual = self.worst_dynamics_residual.max(residual);
        if !(t.cost <= t.initial_cost) {
            self.descent_failures += 1;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub time: f64,
    pub state: EgoState,
    pub input: EgoInput,
    pub lateral_acceleration: f64,
    /// Nearest bounding-box distance to any object, m.
    pub nearest_object: f64,
    pub vru_crossing: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `cycle<TAB>rule-trace line` entries.
    pub rule_trace: Vec<String>,
    pub solver: Vec<SolveRecord>,
    pub raster: Option<(usize, RiskFieldSet)>,
    pub graph_dump: Option<(usize, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub scenario: String,
    pub seed: u64,
    pub collisions: usize,
    pub collided_with: Vec<String>,
    pub goal_reached: bool,
    pub completion_time: Option<f64>,
    pub sim_time: f64,
    pub objects: Vec<ObjectMetrics>,
    pub max_acceleration: f64,
    pub min_acceleration: f64,
    pub max_abs_lateral_acceleration: f64,
    /// Entries of the ego footprint centre outside its lane while a walking
    /// road user crosses.
    pub lane_departures: usize,
    pub deadlock: bool,
    pub cycles: usize,
    pub solver: SolverSummary,
    pub trace: Vec<TraceRow>,
    pub diagnostics: Diagnostics,
}

impl SimResult {
    pub fn min_object_distance(&self) -> Option<f64> {
        self.objects.iter().map(|o| o.min_distance).reduce(f64::min)
    }

    pub fn standstill_distance(&self) -> Option<f64> {
        self.objects.iter().filter_map(|o| o.standstill_distance).reduce(f64::min)
    }
}

fn interpolate(states: &[EgoState], tau: f64, t_s: f64) -> EgoState {
    let f = (tau / t_s).max(0.0);
    let i = (f.floor() as usize).min(states.len() - 1);
    let j = (i + 1).min(states.len() - 1);
    let w = (f - i as f64).clamp(0.0, 1.0);
    let (a, b) = (states[i].to_array(), states[j].to_array());
    let mut out = [0.0; 5];
    for k in 0..5 {
        out[k] = a[k] + w * (b[k] - a[k]);
    }
    EgoState::from_array(out)
}

/// Runs one scenario to goal, collision or duration cap.
pub fn run_scenario(scenario: &Scenario, config: &NmpcConfig, params: &SimParams) -> Result<SimResult> {
    scenario.validate()?;
    config.validate()?;
    if !(params.plant_dt > 0.0) || params.replan_every == 0 {
        return Err(Error::Input("plant step and replan period must be positive".into()));
    }
    let rules = RuleSet::traffic();
    let vehicle = config.vehicle;
    let bounds = config.bounds;
    let dt = params.plant_dt;
    let cycle_dt = dt * params.replan_every as f64;
    let lane = scenario.goal_lane().expect("validated").clone();
    let goal = scenario.goal_point();

    let mut ego = bounds.clamp_state(EgoState {
        x: scenario.ego.x,
        y: scenario.ego.y,
        theta: scenario.ego.heading,
        v: scenario.ego.speed,
        delta: 0.0,
    });
    let mut tracks: Vec<ObjectTrack> = scenario.actors.iter().map(ObjectTrack::from_actor).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let noise = params.perception.noise;
    let normal = |var: f64| Normal::new(0.0, var.max(0.0).sqrt()).expect("finite variance");
    let (nx, ny, npsi) = (normal(noise.var_x), normal(noise.var_y), normal(noise.var_psi));

    let mut objects: Vec<ObjectMetrics> = tracks
        .iter()
        .map(|t| ObjectMetrics {
            id: t.id.clone(),
            class: t.class,
            min_distance: f64::INFINITY,
            standstill_distance: None,
        })
        .collect();
    let mut result = SimResult {
        scenario: scenario.id.clone(),
        seed: params.seed,
        collisions: 0,
        collided_with: Vec::new(),
        goal_reached: false,
        completion_time: None,
        sim_time: 0.0,
        objects: Vec::new(),
        max_acceleration: f64::NEG_INFINITY,
        min_acceleration: f64::INFINITY,
        max_abs_lateral_acceleration: 0.0,
        lane_departures: 0,
        deadlock: false,
        cycles: 0,
        solver: SolverSummary::default(),
        trace: Vec::new(),
        diagnostics: Diagnostics::default(),
    };

    let mut plan: Option<Trajectory> = None;
    let mut plan_time = 0.0;
    let mut vru_crossing = false;
    let mut ego_lane = None;
    let mut departed = false;
    let mut last_moving = 0.0;
    let mut prev_lateral_error = 0.0;
    let steps = (scenario.duration_cap / dt).round() as usize;
    let mut t = 0.0;
    for k in 0..steps {
        if k % params.replan_every == 0 {
            let cycle = result.cycles;
            let elapsed = if k == 0 { 0.0 } else { cycle_dt };
            let mut observed = Vec::with_capacity(tracks.len());
            for tr in tracks.iter_mut() {
                let d = observation_distance(&ego, &vehicle, tr);
                let seen = d <= params.perception.sensor_range;
                if seen {
                    update_certainty(tr, d, elapsed, &params.perception.certainty);
                }
                observed.push(seen);
            }
            let perceived: Vec<ObjectTrack> = if params.perception_noise {
                tracks
                    .iter()
                    .map(|tr| {
                        let mut p = tr.clone();
                        p.pose.x += nx.sample(&mut rng);
                        p.pose.y += ny.sample(&mut rng);
                        p.pose.theta += npsi.sample(&mut rng);
                        p
                    })
                    .collect()
            } else {
                tracks.clone()
            };
            let mut ctx = build_scene(
                &ego,
                &vehicle,
                &scenario.lanes,
                &scenario.markings,
                &perceived,
                &observed,
                config.horizon,
                config.t_s,
                &params.perception,
                ego_lane,
            )?;
            ego_lane = ctx.ego_lane;
            apply_rules(&mut ctx.graph, &rules)?;
            vru_crossing = ctx.vru_crossing();
            let fields = build_risk_fields(&ctx.graph, &ctx.inputs, config.horizon)?;
            let diag = &params.diagnostics;
            if diag.rule_trace {
                for line in rule_trace(&ctx.graph) {
                    result.diagnostics.rule_trace.push(format!("{cycle}\t{line}"));
                }
            }
            if diag.graph_cycle == Some(cycle) {
                result.diagnostics.graph_dump = Some((cycle, ctx.graph.dump()));
            }
            if diag.raster_cycle == Some(cycle) {
                result.diagnostics.raster = Some((cycle, fields.clone()));
            }
            let reference = Reference::along_centerline(&lane.center, ego.x, lane.direction as f64, config);
            let warm = plan.as_ref().map(|p| shift_warm_start(p, config));
            let traj = solve(&ego, &reference, &fields, config, warm.as_ref())?;
            result.solver.add(&traj, config);
            if diag.solver_log {
                result.diagnostics.solver.push(SolveRecord::new(cycle, t, &traj));
            }
            plan = Some(traj);
            plan_time = t;
            result.cycles += 1;
        }

        let current = plan.as_ref().expect("planned on the first step");
        let input = if current.status == SolveStatus::InfeasibleStart {
            EgoInput {
                a: bounds.input_lower[0].max(-ego.v / dt),
                omega: (-ego.delta / dt).clamp(bounds.input_lower[1], bounds.input_upper[1]),
            }
        } else {
            match params.mode {
                ActuationMode::Perfect => current.inputs[0],
                ActuationMode::Controller => {
                    // planned input as feed-forward, feedback on the
                    // deviation from the planned trajectory
                    let tau = t - plan_time;
                    let here = interpolate(&current.states, tau, config.t_s);
                    let i = ((tau / config.t_s).floor() as usize).min(current.inputs.len() - 1);
                    let (s, c) = ego.theta.sin_cos();
                    let e = -s * (here.x - ego.x) + c * (here.y - ego.y);
                    let e_dot = if k == 0 { 0.0 } else { (e - prev_lateral_error) / dt };
                    prev_lateral_error = e;
                    EgoInput {
                        a: current.inputs[i].a + longitudinal_controller(ego.v, here.v, &params.gains, &bounds),
                        omega: current.inputs[i].omega + lateral_controller(e, e_dot, &params.gains, &bounds),
                    }
                }
            }
        };
        let input = bounds.clamp_input(input);
        ego = bounds.clamp_state(step(&ego, &input, &vehicle, dt));
        for tr in tracks.iter_mut() {
            tr.advance(dt);
        }
        t = (k + 1) as f64 * dt;

        let ego_box = OrientedBox::ego(&ego, &vehicle);
        let standing = ego.v.abs() < 0.1;
        let mut nearest = f64::INFINITY;
        for (tr, m) in tracks.iter().zip(objects.iter_mut()) {
            let d = bounding_box_distance(&ego_box, &tr.footprint());
            nearest = nearest.min(d);
            m.min_distance = m.min_distance.min(d);
            if standing && tr.class == ObjectClass::Pedestrian {
                m.standstill_distance = Some(m.standstill_distance.map_or(d, |s: f64| s.min(d)));
            }
            if d == 0.0 && !result.collided_with.contains(&tr.id) {
                result.collisions += 1;
                result.collided_with.push(tr.id.clone());
            }
        }
        let lat = vehicle.lateral_acceleration(&ego);
        result.max_acceleration = result.max_acceleration.max(input.a);
        result.min_acceleration = result.min_acceleration.min(input.a);
        result.max_abs_lateral_acceleration = result.max_abs_lateral_acceleration.max(lat.abs());
        let off_lane = (ego_box.cy - crate::field::poly_eval(&lane.center, ego_box.cx)).abs() > 0.5 * lane.width;
        let departing = vru_crossing && off_lane;
        if departing && !departed {
            result.lane_departures += 1;
        }
        departed = departing;
        if !standing {
            last_moving = t;
        }
        if params.record_trace {
            result.trace.push(TraceRow {
                time: t,
                state: ego,
                input,
                lateral_acceleration: lat,
                nearest_object: nearest,
                vru_crossing,
            });
        }
        if result.collisions > 0 {
            break;
        }
        if (ego.x - goal.0).hypot(ego.y - goal.1) <= params.goal_radius {
            result.goal_reached = true;
            result.completion_time = Some(t);
            break;
        }
    }
    result.sim_time = t;
    result.deadlock = !result.goal_reached && result.collisions == 0 && t - last_moving >= params.deadlock_window;
    if result.trace.is_empty() && !params.record_trace {
        result.trace.shrink_to_fit();
    }
    if result.max_acceleration == f64::NEG_INFINITY {
        result.max_acceleration = 0.0;
        result.min_acceleration = 0.0;
    }
    result.objects = objects;
    Ok(result)
}

/// Writes the per-plant-step trace as comma-separated rows.
pub fn write_trace<W: Write>(out: W, result: &SimResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "time", "x", "y", "theta", "v", "delta", "a", "omega", "lateral_acc", "nearest_object", "vru_crossing",
    ])?;
    for r in &result.trace {
        let s = &r.state;
        let near = if r.nearest_object.is_finite() {
            format!("{:.4}", r.nearest_object)
        } else {
            String::new()
        };
        w.write_record([
            format!("{:.2}", r.time),
            format!("{:.4}", s.x),
            format!("{:.4}", s.y),
            format!("{:.5}", s.theta),
            format!("{:.4}", s.v),
            format!("{:.5}", s.delta),
            format!("{:.4}", r.input.a),
            format!("{:.5}", r.input.omega),
            format!("{:.4}", r.lateral_acceleration),
            near,
            (r.vru_crossing as u8).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "trace".into(),
        source: e,
    })
}

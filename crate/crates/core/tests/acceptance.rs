//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Failing criteria are reported but only fail the process when
//! `ACCEPTANCE_STRICT=1` is set.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use ctxplan_core::collision::{
    braking_deceleration, collision_probability, smoothed_collision_probability, CollisionParams, EdgeObservation,
    ObservationNoise,
};
use ctxplan_core::field::{
    marking_params, object_params, LineType, MarkingField, ObjectClass, ObjectField, Pose, RiskFieldSet,
};
use ctxplan_core::graph::{NodeId, SceneGraph, Value};
use ctxplan_core::planner::{NmpcConfig, Problem, Reference};
use ctxplan_core::rules::{apply_rules, crossing_acceptability, RiskLevel, RuleSet};
use ctxplan_core::sim::batch::{aggregate, median, run_batch, write_aggregate, write_summary};
use ctxplan_core::sim::run::{SimParams, SimResult};
use ctxplan_core::sim::scenario::{family_a, family_b, family_c, family_d, Scenario};
use ctxplan_core::vehicle::EgoState;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(n: usize, name: &str, started: Instant, outcome: Outcome) -> bool {
    println!(
        "criterion {n} {}: {name}: {} ({:.1} s)",
        if outcome.pass { "PASS" } else { "FAIL" },
        outcome.detail,
        started.elapsed().as_secs_f64()
    );
    outcome.pass
}

fn table_lookups() -> Outcome {
    let markings = [
        (LineType::Solid, 0, (4.0, 0.6)),
        (LineType::Solid, 1, (0.0, 0.6)),
        (LineType::Dashed, 0, (1.5, 0.6)),
        (LineType::Dashed, 1, (0.0, 0.6)),
    ];
    let mut mismatches = Vec::new();
    for (line, acc, expected) in markings {
        let got = marking_params(line, acc);
        if got != expected {
            mismatches.push(format!("{}/{acc}: {got:?}", line.as_str()));
        }
    }
    use ObjectClass::*;
    use RiskLevel::*;
    let (l, w) = (4.5, 1.9);
    let objects = [
        (Car, Low, (2.0, 1.5 * l + 0.05, 1.2 * w + 0.05)),
        (Car, Medium, (3.0, 1.5 * l + 0.1, 1.2 * w + 0.1)),
        (Car, High, (4.0, 1.5 * l + 0.3, 1.2 * w + 0.3)),
        (ArtObject, Low, (1.0, 1.5 * l + 0.2, 1.2 * w + 0.2)),
        (ArtObject, Medium, (2.0, 1.5 * l + 0.25, 1.2 * w + 0.25)),
        (ArtObject, High, (3.0, 1.5 * l + 0.4, 1.2 * w + 0.4)),
        (Pedestrian, Low, (2.0, 1.5 * l + 1.2, 1.2 * w + 1.2)),
        (Pedestrian, Medium, (3.0, 1.5 * l + 1.7, 1.2 * w + 1.7)),
        (Pedestrian, High, (4.0, 1.5 * l + 2.2, 1.2 * w + 2.2)),
    ];
    for (class, risk, expected) in objects {
        let got = object_params(class, risk, l, w);
        if got != expected {
            mismatches.push(format!("{class:?}/{}: {got:?}", risk.as_str()));
        }
    }
    Outcome {
        pass: mismatches.is_empty(),
        detail: if mismatches.is_empty() {
            "4 marking rows and 9 object rows match".into()
        } else {
            format!("mismatches {}", mismatches.join(", "))
        },
    }
}

struct TruthRow {
    line_type: String,
    side: String,
    object_ahead: bool,
    oncoming: bool,
    vru_crossing: bool,
    acceptability: i64,
    priority: i64,
}

fn truth_table() -> Vec<TruthRow> {
    let text = include_str!("fixtures/crossing_truth_table.csv");
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    reader
        .records()
        .map(|r| {
            let r = r.expect("fixture row");
            let flag = |i: usize| r[i].parse::<bool>().expect("boolean column");
            TruthRow {
                line_type: r[0].to_string(),
                side: r[1].to_string(),
                object_ahead: flag(2),
                oncoming: flag(3),
                vru_crossing: flag(4),
                acceptability: r[5].parse().expect("integer column"),
                priority: r[6].parse().expect("integer column"),
            }
        })
        .collect()
}

fn no_attrs() -> Vec<(&'static str, Value)> {
    Vec::new()
}

fn place(g: &mut SceneGraph, ego: NodeId, ty: &str, lane: NodeId, longitudinal: f64, oncoming: bool) {
    let o = g
        .add_entity(ty, [("collision_probability", 0.0), ("classification_certainty", 0.9)])
        .unwrap();
    g.add_relation("is_on", [("physical", o), ("road", lane)], no_attrs()).unwrap();
    g.add_relation(
        "relative_position",
        [("object", o), ("ego", ego)],
        [
            ("longitudinal", Value::Real(longitudinal)),
            ("distance", Value::Real(longitudinal.abs())),
            ("oncoming", Value::Bool(oncoming)),
        ],
    )
    .unwrap();
}

/// Ego lane, the neighbouring lane on the marking's far side, and one marking
/// between them. Absent conditions are represented by objects just outside
/// the rule thresholds.
fn resolve(row: &TruthRow) -> (i64, i64) {
    let mut g = SceneGraph::new();
    let ego = g.add_entity("ego", no_attrs()).unwrap();
    let ego_lane = g.add_entity("lane", [("direction", 1i64)]).unwrap();
    let other = g.add_entity("lane", [("direction", -1i64)]).unwrap();
    let marking = g
        .add_entity("lane_marking", [("lane_marking_type", row.line_type.as_str())])
        .unwrap();
    let far_side = if row.side == "left" { "right" } else { "left" };
    g.add_relation("is_on", [("physical", ego), ("road", ego_lane)], no_attrs())
        .unwrap();
    g.add_relation(
        "bounds",
        [("lane_marking", marking), ("road", ego_lane)],
        [("side", row.side.as_str())],
    )
    .unwrap();
    g.add_relation("bounds", [("lane_marking", marking), ("road", other)], [("side", far_side)])
        .unwrap();
    place(&mut g, ego, "artificial_object", ego_lane, if row.object_ahead { 15.0 } else { 25.0 }, false);
    place(&mut g, ego, "vehicle", other, if row.oncoming { 40.0 } else { 60.0 }, true);
    g.add_entity("pedestrian", [("crossing_road", row.vru_crossing)]).unwrap();
    apply_rules(&mut g, &RuleSet::traffic()).unwrap();
    let c = crossing_acceptability(&g, marking).expect("a crossing rule fires for every marking");
    (c.acceptability as i64, c.priority as i64)
}

fn rule_priority_matrix() -> Outcome {
    let rows = truth_table();
    let wrong: Vec<String> = rows
        .iter()
        .filter_map(|row| {
            let got = resolve(row);
            (got != (row.acceptability, row.priority)).then(|| {
                format!(
                    "{}/{}/ahead={}/oncoming={}/vru={} gave {}@{}",
                    row.line_type, row.side, row.object_ahead, row.oncoming, row.vru_crossing, got.0, got.1
                )
            })
        })
        .collect();
    Outcome {
        pass: rows.len() == 32 && wrong.is_empty(),
        detail: format!("{} cases, {} mismatches {}", rows.len(), wrong.len(), wrong.join("; ")),
    }
}

/// Samples the measured quantities and counts lateral offsets at the edge
/// that fall within the combined half-width.
fn monte_carlo(obs: &EdgeObservation, w_e: f64, samples: usize, rng: &mut ChaCha8Rng) -> f64 {
    let n = |m: f64, v: f64| Normal::new(m, v.sqrt()).unwrap();
    let (x, y, psi, wt) = (
        n(obs.x_bar, obs.var_x),
        n(obs.y_bar, obs.var_y),
        n(obs.psi_bar, obs.var_psi),
        n(obs.w_t, obs.var_wt),
    );
    let hits = (0..samples)
        .filter(|_| {
            let offset = y.sample(rng) + x.sample(rng) * psi.sample(rng).tan();
            offset.abs() < 0.5 * (w_e + wt.sample(rng))
        })
        .count();
    hits as f64 / samples as f64
}

fn collision_oracle() -> Outcome {
    let params = CollisionParams::default();
    let noise = ObservationNoise::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let widths = [0.3, 1.2, 1.9, 4.5];
    let mut worst: f64 = 0.0;
    let mut points = 0;
    let mut i = 0;
    for x_bar in [2.0, 5.0, 10.0, 20.0, 40.0] {
        for y_bar in [-2.5, -1.2, 0.0, 0.6, 1.5] {
            for psi_bar in [0.0, 0.03] {
                let obs = EdgeObservation::exact(x_bar, y_bar, psi_bar, widths[i % widths.len()]).with_noise(&noise);
                i += 1;
                let analytic = collision_probability(&obs, &params);
                let empirical = monte_carlo(&obs, params.w_e, 1_000_000, &mut rng);
                worst = worst.max((analytic - empirical).abs());
                points += 1;
            }
        }
    }
    // speed/distance pairs whose required deceleration is exactly d0
    let mut midpoint_ok = true;
    for (v, x) in [(6.0, 6.0), (3.0, 1.5), (9.0, 13.5), (12.0, 24.0)] {
        let obs = EdgeObservation::exact(x, 0.4, 0.0, 0.5).with_noise(&noise);
        let d = braking_deceleration(v, &obs).unwrap();
        let smoothed = smoothed_collision_probability(v, &obs, &params).unwrap();
        midpoint_ok &= d == params.d0 && smoothed == 0.5 * collision_probability(&obs, &params);
    }
    Outcome {
        pass: points >= 50 && worst < 5e-3 && midpoint_ok,
        detail: format!(
            "{points} points, worst |analytic - empirical| {worst:.2e}, midpoint exact at d0: {midpoint_ok}"
        ),
    }
}

fn random_fields(rng: &mut ChaCha8Rng, horizon: usize, t_s: f64) -> RiskFieldSet {
    let objects = (0..rng.random_range(1..4))
        .map(|_| {
            let (x, y, heading, speed): (f64, f64, f64, f64) = (
                rng.random_range(3.0..40.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.1..3.1),
                rng.random_range(0.0..4.0),
            );
            ObjectField {
                amplitude: rng.random_range(1.0..4.0),
                sigma_x: rng.random_range(0.5..7.0),
                sigma_y: rng.random_range(0.5..3.0),
                centers: (0..=horizon)
                    .map(|k| {
                        let s = k as f64 * t_s * speed;
                        Pose { x: x + s * heading.cos(), y: y + s * heading.sin(), theta: heading }
                    })
                    .collect(),
                label: String::new(),
            }
        })
        .collect();
    let markings = [-1.75, 1.75, 5.25]
        .into_iter()
        .map(|offset| MarkingField {
            amplitude: [0.0, 1.5, 4.0][rng.random_range(0..3)],
            sigma: 0.6,
            polynomial: [offset, rng.random_range(-0.02..0.02), rng.random_range(-1e-3..1e-3), 0.0],
            label: String::new(),
        })
        .collect();
    RiskFieldSet { objects, markings }
}

fn gradient_check() -> Outcome {
    let config = NmpcConfig::default();
    let n = config.horizon;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let initial = EgoState {
            x: rng.random_range(-5.0..5.0),
            y: rng.random_range(-1.5..1.5),
            theta: rng.random_range(-0.3..0.3),
            v: rng.random_range(0.0..9.5),
            delta: rng.random_range(-0.09..0.09),
        };
        let reference = Reference::along_centerline(&[0.0; 4], initial.x, 1.0, &config);
        let fields = random_fields(&mut rng, n, config.t_s);
        let z: Vec<f64> = (0..n)
            .flat_map(|_| [rng.random_range(-3.0..1.5), rng.random_range(-0.3..0.3)])
            .collect();
        let problem = Problem { initial, reference: &reference, fields: &fields, config: &config };
        let (_, analytic) = problem.cost_and_gradient(&z);
        let h = 1e-6;
        let numeric: Vec<f64> = (0..z.len())
            .map(|i| {
                let (mut zp, mut zm) = (z.clone(), z.clone());
                zp[i] += h;
                zm[i] -= h;
                (problem.cost(&zp) - problem.cost(&zm)) / (2.0 * h)
            })
            .collect();
        let err: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = numeric.iter().map(|b| b * b).sum::<f64>().sqrt().max(1e-8);
        worst = worst.max(err / scale);
    }
    Outcome {
        pass: worst < 1e-4,
        detail: format!("20 problems with N={n}, worst relative error {worst:.2e}"),
    }
}

fn all_scenarios() -> Vec<Scenario> {
    let mut all = family_a();
    all.extend(family_b());
    all.extend(family_c());
    all.extend(family_d());
    all
}

fn workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn family<'a>(results: &'a [SimResult], prefix: &str) -> Vec<&'a SimResult> {
    results
        .iter()
        .filter(|r| r.scenario.split('-').next() == Some(prefix))
        .collect()
}

fn solver_feasibility(results: &[SimResult], minutes: f64) -> Outcome {
    let solves: usize = results.iter().map(|r| r.solver.solves).sum();
    let residual = results.iter().map(|r| r.solver.worst_dynamics_residual).fold(0.0, f64::max);
    let violation = results.iter().map(|r| r.solver.worst_violation).fold(0.0, f64::max);
    let ascents: usize = results.iter().map(|r| r.solver.descent_failures).sum();
    let infeasible: usize = results.iter().map(|r| r.solver.infeasible_starts).sum();
    Outcome {
        pass: results.len() == 309
            && residual == 0.0
            && violation <= 1e-6
            && ascents == 0
            && infeasible == 0
            && minutes < 30.0,
        detail: format!(
            "{} runs, {solves} solves, max dynamics residual {residual:.1e}, max bound violation {violation:.1e}, \
             cost above warm start {ascents}, infeasible starts {infeasible}, batch {minutes:.1} min",
            results.len()
        ),
    }
}

fn scenario_a(results: &[SimResult]) -> Outcome {
    let runs = family(results, "a");
    let collisions: usize = runs.iter().map(|r| r.collisions).sum();
    let goals = runs.iter().filter(|r| r.goal_reached).count();
    let times: Vec<f64> = runs.iter().filter_map(|r| r.completion_time).collect();
    let in_band = times.iter().all(|t| (15.0..=25.0).contains(t));
    let t_min = times.iter().copied().fold(f64::INFINITY, f64::min);
    let t_max = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lateral = runs.iter().map(|r| r.max_abs_lateral_acceleration).fold(0.0, f64::max);
    Outcome {
        pass: runs.len() == 9 && collisions == 0 && goals == 9 && in_band && lateral < 0.5,
        detail: format!(
            "{} runs, {collisions} collisions, {goals}/9 goals, completion {t_min:.2}-{t_max:.2} s, \
             max |lateral acceleration| {lateral:.2} m/s^2",
            runs.len()
        ),
    }
}

fn scenario_cd(results: &[SimResult]) -> Outcome {
    let mut runs = family(results, "c");
    runs.extend(family(results, "d"));
    let collisions: usize = runs.iter().map(|r| r.collisions).sum();
    let departures: usize = runs.iter().map(|r| r.lane_departures).sum();
    let standstill: Vec<f64> = runs.iter().filter_map(|r| r.standstill_distance()).collect();
    let closest_stop = standstill.iter().copied().fold(f64::INFINITY, f64::min);
    let mut braking: Vec<f64> = runs.iter().map(|r| (-r.min_acceleration).max(0.0)).collect();
    let braking_median = median(&mut braking).unwrap_or(0.0);
    let goals = runs.iter().filter(|r| r.goal_reached).count();
    Outcome {
        pass: runs.len() == 192
            && collisions == 0
            && departures == 0
            && closest_stop > 2.0
            && braking_median < 1.0,
        detail: format!(
            "{} runs, {collisions} collisions, {departures} lane departures, {} standstills (closest {closest_stop:.2} m), \
             median peak braking {braking_median:.2} m/s^2, {goals} goals",
            runs.len(),
            standstill.len()
        ),
    }
}

fn scenario_b(results: &[SimResult], config: &NmpcConfig) -> Outcome {
    let runs = family(results, "b");
    let goals = runs.iter().filter(|r| r.goal_reached).count();
    let collisions: usize = runs.iter().map(|r| r.collisions).sum();
    let b = &config.bounds;
    let tol = 1e-9;
    let within = |r: &SimResult| {
        r.trace.iter().all(|row| {
            let s = row.state.to_array();
            let u = [row.input.a, row.input.omega];
            (0..5).all(|i| s[i] >= b.state_lower[i] - tol && s[i] <= b.state_upper[i] + tol)
                && (0..2).all(|i| u[i] >= b.input_lower[i] - tol && u[i] <= b.input_upper[i] + tol)
        })
    };
    let completed: Vec<&&SimResult> = runs.iter().filter(|r| r.goal_reached).collect();
    let bounded = completed.iter().all(|r| within(r));
    let deadlocks: Vec<&str> = runs.iter().filter(|r| r.deadlock).map(|r| r.scenario.as_str()).collect();
    let collided: Vec<String> = runs
        .iter()
        .filter(|r| r.collisions > 0)
        .map(|r| format!("{} ({})", r.scenario, r.collided_with.join("+")))
        .collect();
    let mut detail = format!(
        "{} runs, {goals}/108 goals, {collisions} collisions, completed runs within bounds: {bounded}, deadlocks: {}",
        runs.len(),
        if deadlocks.is_empty() { "none".to_string() } else { deadlocks.join(" ") }
    );
    if !collided.is_empty() {
        let _ = write!(detail, ", collisions: {}", collided.join(" "));
    }
    Outcome {
        pass: runs.len() == 108 && goals >= 105 && collisions <= 1 && bounded,
        detail,
    }
}

fn tables(results: &[SimResult]) -> (Vec<u8>, Vec<u8>) {
    let mut agg = Vec::new();
    write_aggregate(&mut agg, &aggregate(results)).unwrap();
    let mut summary = Vec::new();
    write_summary(&mut summary, results).unwrap();
    (agg, summary)
}

fn determinism(first: &[SimResult], config: &NmpcConfig, params: &SimParams) -> Outcome {
    let again = run_batch(&all_scenarios(), config, params, workers() + 1).unwrap();
    let (agg_a, sum_a) = tables(first);
    let (agg_b, sum_b) = tables(&again);
    Outcome {
        pass: agg_a == agg_b && sum_a == sum_b,
        detail: format!(
            "aggregate table {} bytes identical: {}, per-run summary identical: {}",
            agg_a.len(),
            agg_a == agg_b,
            sum_a == sum_b
        ),
    }
}

fn main() {
    let mut passed = Vec::new();

    let t = Instant::now();
    let o = table_lookups();
    let fast = t.elapsed().as_secs_f64() < 1.0;
    passed.push(report(1, "table lookups", t, Outcome { pass: o.pass && fast, ..o }));

    let t = Instant::now();
    let o = rule_priority_matrix();
    let fast = t.elapsed().as_secs_f64() < 1.0;
    passed.push(report(2, "rule priority matrix", t, Outcome { pass: o.pass && fast, ..o }));

    let t = Instant::now();
    let o = collision_oracle();
    let fast = t.elapsed().as_secs_f64() < 60.0;
    passed.push(report(3, "collision probability vs Monte Carlo", t, Outcome { pass: o.pass && fast, ..o }));

    let t = Instant::now();
    let o = gradient_check();
    let fast = t.elapsed().as_secs_f64() < 30.0;
    passed.push(report(4, "objective gradient", t, Outcome { pass: o.pass && fast, ..o }));

    let config = NmpcConfig::default();
    let params = SimParams::default();
    let t = Instant::now();
    let results = run_batch(&all_scenarios(), &config, &params, workers()).expect("batch runs");
    let minutes = t.elapsed().as_secs_f64() / 60.0;
    passed.push(report(5, "solver feasibility and descent", t, solver_feasibility(&results, minutes)));

    let t = Instant::now();
    passed.push(report(6, "scenario a", t, scenario_a(&results)));
    let t = Instant::now();
    passed.push(report(7, "scenarios c and d", t, scenario_cd(&results)));
    let t = Instant::now();
    passed.push(report(8, "scenario b", t, scenario_b(&results, &config)));
    let t = Instant::now();
    passed.push(report(9, "determinism", t, determinism(&results, &config, &params)));

    let failed: Vec<String> = passed
        .iter()
        .enumerate()
        .filter(|(_, &p)| !p)
        .map(|(i, _)| (i + 1).to_string())
        .collect();
    println!(
        "acceptance: {}/{} criteria pass{}",
        passed.len() - failed.len(),
        passed.len(),
        if failed.is_empty() { String::new() } else { format!(", failing: {}", failed.join(" ")) }
    );
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && !failed.is_empty() {
        std::process::exit(1);
    }
}

//! Batch execution over scenario families with per-run summaries and
//! aggregate statistics.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::NmpcConfig;

use super::run::{run_scenario, SimParams, SimResult};
use super::scenario::Scenario;

/// One job per (scenario, seed) pair; scenarios without seeds run once with
/// the base seed.
pub fn expand_jobs(scenarios: &[Scenario], base_seed: u64) -> Vec<(Scenario, u64)> {
    let mut jobs = Vec::new();
    for s in scenarios {
        if s.seeds.is_empty() {
            jobs.push((s.clone(), base_seed));
        } else {
            for &seed in &s.seeds {
                jobs.push((s.clone(), seed));
            }
        }
    }
    jobs
}

/// Runs every job on a pool of `workers` threads; results keep job order and
/// do not depend on the worker count.
pub fn run_batch(
    scenarios: &[Scenario],
    config: &NmpcConfig,
    params: &SimParams,
    workers: usize,
) -> Result<Vec<SimResult>> {
    let jobs = expand_jobs(scenarios, params.seed);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Input(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        jobs.par_iter()
            .map(|(s, seed)| {
                let p = SimParams {
                    seed: *seed,
                    ..params.clone()
                };
                run_scenario(s, config, &p)
            })
            .collect()
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

pub const SUMMARY_HEADER: [&str; 17] = [
    "scenario",
    "seed",
    "goal_reached",
    "completion_time",
    "collisions",
    "collided_with",
    "min_distance",
    "standstill_distance",
    "max_acceleration",
    "min_acceleration",
    "max_abs_lateral_acc",
    "lane_departures",
    "deadlock",
    "cycles",
    "stalled",
    "max_iterations",
    "descent_failures",
];

/// One row per run.
pub fn write_summary<W: Write>(out: W, results: &[SimResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for r in results {
        w.write_record([
            r.scenario.clone(),
            r.seed.to_string(),
            r.goal_reached.to_string(),
            opt(r.completion_time),
            r.collisions.to_string(),
            r.collided_with.join(";"),
            opt(r.min_object_distance()),
            opt(r.standstill_distance()),
            format!("{:.4}", r.max_acceleration),
            format!("{:.4}", r.min_acceleration),
            format!("{:.4}", r.max_abs_lateral_acceleration),
            r.lane_departures.to_string(),
            r.deadlock.to_string(),
            r.cycles.to_string(),
            r.solver.stalled.to_string(),
            r.solver.max_iterations.to_string(),
            r.solver.descent_failures.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "summary".into(),
        source: e,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub metric: String,
    pub count: usize,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

/// Median of the sorted sample; the mean of the two middle values for even
/// counts.
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

fn stats(metric: &str, mut values: Vec<f64>) -> Option<MetricStats> {
    let med = median(&mut values)?;
    Some(MetricStats {
        metric: metric.to_string(),
        count: values.len(),
        min: values[0],
        median: med,
        max: values[values.len() - 1],
    })
}

/// Count, minimum, median and maximum of the per-run metrics; metrics without
/// any value are omitted.
pub fn aggregate(results: &[SimResult]) -> Vec<MetricStats> {
    let collect = |f: &dyn Fn(&SimResult) -> Option<f64>| results.iter().filter_map(f).collect::<Vec<f64>>();
    let rows: Vec<(&str, Vec<f64>)> = vec![
        ("completion_time", collect(&|r| r.completion_time)),
        ("collisions", collect(&|r| Some(r.collisions as f64))),
        ("goal_reached", collect(&|r| Some(r.goal_reached as u8 as f64))),
        ("min_distance", collect(&|r| r.min_object_distance())),
        ("standstill_distance", collect(&|r| r.standstill_distance())),
        ("max_acceleration", collect(&|r| Some(r.max_acceleration))),
        ("min_acceleration", collect(&|r| Some(r.min_acceleration))),
        ("max_abs_lateral_acc", collect(&|r| Some(r.max_abs_lateral_acceleration))),
        ("lane_departures", collect(&|r| Some(r.lane_departures as f64))),
        ("deadlock", collect(&|r| Some(r.deadlock as u8 as f64))),
    ];
    rows.into_iter().filter_map(|(m, v)| stats(m, v)).collect()
}

pub fn write_aggregate<W: Write>(out: W, stats: &[MetricStats]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["metric", "count", "min", "median", "max"])?;
    for s in stats {
        w.write_record([
            s.metric.clone(),
            s.count.to_string(),
            format!("{:.4}", s.min),
            format!("{:.4}", s.median),
            format!("{:.4}", s.max),
        ])?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "aggregate".into(),
        source: e,
    })
}

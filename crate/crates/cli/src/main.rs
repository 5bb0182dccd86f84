use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ctxplan_core::field::{write_raster, RasterSpec};
use ctxplan_core::planner::{write_solver_log, NmpcConfig};
use ctxplan_core::sim::batch::{aggregate, run_batch, write_aggregate, write_summary};
use ctxplan_core::sim::run::{run_scenario, write_trace, ActuationMode, DiagnosticRequest, SimParams, SimResult};
use ctxplan_core::sim::scenario::{builtin_family, Scenario, GOAL_DISTANCE, LANE_WIDTH};
use ctxplan_core::{Error, Result};

#[derive(Parser)]
#[command(name = "ctxplan", version, about = "Context-aware trajectory planning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario or a built-in family and write traces and metrics
    Run(RunArgs),
    /// Simulate up to a planning cycle and write the risk field as a grid
    Raster(RasterArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    /// Apply the first planned input for the whole planning cycle
    Perfect,
    /// Track the planned trajectory with feedback controllers
    Controller,
}

impl From<Mode> for ActuationMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Perfect => ActuationMode::Perfect,
            Mode::Controller => ActuationMode::Controller,
        }
    }
}

#[derive(clap::Args)]
struct RunArgs {
    /// Scenario JSON file, or builtin:<a|b|c|d|empty>[:<index>]
    #[arg(long)]
    scenario: String,
    /// Output directory, created if missing
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Actuation model of the simulated vehicle
    #[arg(long, value_enum, default_value_t = Mode::Perfect)]
    mode: Mode,
    /// Number of worker threads for batch runs
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    parallel: u64,
    /// Seed for perception noise; scenarios listing their own seeds use those
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Perturb observed object poses with seeded Gaussian noise
    #[arg(long)]
    noise: bool,
    /// Planner configuration JSON; omitted fields keep their defaults
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Write the rule firings of every planning cycle
    #[arg(long)]
    trace_rules: bool,
    /// Write the risk field grid of this planning cycle
    #[arg(long, value_name = "CYCLE")]
    raster: Option<usize>,
    /// Write one solver record per planning cycle
    #[arg(long)]
    solver_log: bool,
    /// Write the scene graph of this planning cycle
    #[arg(long, value_name = "CYCLE")]
    dump_graph: Option<usize>,
}

#[derive(clap::Args)]
struct RasterArgs {
    /// Scenario JSON file, or builtin:<a|b|c|d|empty>[:<index>] (first variation by default)
    #[arg(long)]
    scenario: String,
    /// Planning cycle whose fields are rasterised
    #[arg(long, default_value_t = 0)]
    step: usize,
    /// Horizon step at which the fields are evaluated
    #[arg(long, default_value_t = 0)]
    horizon_step: usize,
    /// Output grid file
    #[arg(long, default_value = "field.csv")]
    out: PathBuf,
    /// Grid spacing, m
    #[arg(long, default_value_t = 0.5)]
    resolution: f64,
    /// Actuation model of the simulated vehicle
    #[arg(long, value_enum, default_value_t = Mode::Perfect)]
    mode: Mode,
    /// Seed for perception noise
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Perturb observed object poses with seeded Gaussian noise
    #[arg(long)]
    noise: bool,
    /// Planner configuration JSON; omitted fields keep their defaults
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

fn load_scenarios(spec: &str) -> Result<Vec<Scenario>> {
    if let Some(rest) = spec.strip_prefix("builtin:") {
        let (family, index) = match rest.split_once(':') {
            Some((f, i)) => {
                let i: usize = i
                    .parse()
                    .map_err(|_| Error::Scenario(format!("invalid variation index `{i}`")))?;
                (f, Some(i))
            }
            None => (rest, None),
        };
        let all = builtin_family(family)?;
        return match index {
            None => Ok(all),
            Some(i) => all
                .get(i)
                .cloned()
                .map(|s| vec![s])
                .ok_or_else(|| Error::Scenario(format!("family `{family}` has {} variations", all.len()))),
        };
    }
    Ok(vec![Scenario::load(Path::new(spec))?])
}

fn load_config(path: Option<&Path>) -> Result<NmpcConfig> {
    let Some(path) = path else {
        return Ok(NmpcConfig::default());
    };
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let config: NmpcConfig = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.display().to_string(),
        source: e,
    })?;
    config.validate()?;
    Ok(config)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.display().to_string(),
        source: e,
    }
}

fn road_raster(resolution: f64) -> RasterSpec {
    RasterSpec {
        x_min: 0.0,
        x_max: GOAL_DISTANCE,
        y_min: -LANE_WIDTH,
        y_max: 2.0 * LANE_WIDTH,
        resolution,
    }
}

fn stem(r: &SimResult, scenarios: &[Scenario]) -> String {
    let seeded = scenarios.iter().any(|s| s.id == r.scenario && !s.seeds.is_empty());
    if seeded {
        format!("{}_seed{}", r.scenario, r.seed)
    } else {
        r.scenario.clone()
    }
}

fn run(args: RunArgs) -> Result<()> {
    let scenarios = load_scenarios(&args.scenario)?;
    fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    let params = SimParams {
        mode: args.mode.into(),
        seed: args.seed,
        perception_noise: args.noise,
        diagnostics: DiagnosticRequest {
            rule_trace: args.trace_rules,
            solver_log: args.solver_log,
            raster_cycle: args.raster,
            graph_cycle: args.dump_graph,
        },
        ..Default::default()
    };
    let config = load_config(args.config.as_deref())?;
    let results = run_batch(&scenarios, &config, &params, args.parallel as usize)?;
    for r in &results {
        let name = stem(r, &scenarios);
        write_trace(create(&args.out.join(format!("trace_{name}.csv")))?, r)?;
        if args.trace_rules {
            let path = args.out.join(format!("rules_{name}.txt"));
            let mut w = create(&path)?;
            for line in &r.diagnostics.rule_trace {
                writeln!(w, "{line}").map_err(io_err(&path))?;
            }
            w.flush().map_err(io_err(&path))?;
        }
        if args.solver_log {
            write_solver_log(create(&args.out.join(format!("solver_{name}.csv")))?, &r.diagnostics.solver)?;
        }
        if let Some(cycle) = args.raster {
            match &r.diagnostics.raster {
                Some((_, fields)) => write_raster(
                    create(&args.out.join(format!("raster_{name}.csv")))?,
                    fields,
                    0,
                    &road_raster(0.5),
                )?,
                None => eprintln!("{name}: run ended before planning cycle {cycle}, no raster written"),
            }
        }
        if let Some(cycle) = args.dump_graph {
            match &r.diagnostics.graph_dump {
                Some((_, dump)) => {
                    let path = args.out.join(format!("graph_{name}.txt"));
                    fs::write(&path, dump).map_err(io_err(&path))?;
                }
                None => eprintln!("{name}: run ended before planning cycle {cycle}, no graph written"),
            }
        }
    }
    write_summary(create(&args.out.join("summary.csv"))?, &results)?;
    write_aggregate(create(&args.out.join("aggregate.csv"))?, &aggregate(&results))?;
    let goals = results.iter().filter(|r| r.goal_reached).count();
    let collisions: usize = results.iter().map(|r| r.collisions).sum();
    println!(
        "{} runs, {goals} goals reached, {collisions} collisions, outputs in {}",
        results.len(),
        args.out.display()
    );
    Ok(())
}

fn raster(args: RasterArgs) -> Result<()> {
    let scenario = load_scenarios(&args.scenario)?.remove(0);
    let params = SimParams {
        mode: args.mode.into(),
        seed: args.seed,
        perception_noise: args.noise,
        record_trace: false,
        diagnostics: DiagnosticRequest {
            raster_cycle: Some(args.step),
            ..Default::default()
        },
        ..Default::default()
    };
    let config = load_config(args.config.as_deref())?;
    if args.horizon_step > config.horizon {
        return Err(Error::Input(format!("horizon step must be at most {}", config.horizon)));
    }
    let r = run_scenario(&scenario, &config, &params)?;
    let (_, fields) = r.diagnostics.raster.as_ref().ok_or_else(|| {
        Error::Input(format!(
            "scenario {} ended after {} planning cycles, before cycle {}",
            scenario.id, r.cycles, args.step
        ))
    })?;
    write_raster(create(&args.out)?, fields, args.horizon_step, &road_raster(args.resolution))?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let outcome = match cli.command {
        Command::Run(a) => run(a),
        Command::Raster(a) => raster(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_user_error() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
